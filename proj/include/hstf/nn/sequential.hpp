#ifndef HSTF_NN_SEQUENTIAL_HPP
#define HSTF_NN_SEQUENTIAL_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hstf/nn/layers.hpp"
#include "hstf/nn/tensor.hpp"

namespace hstf::nn {

struct PoolSpec {
  std::size_t window_h = 2;
  std::size_t window_w = 2;
  std::size_t stride_h = 2;
  std::size_t stride_w = 2;
};

/** Reshapes to rank 1. */
struct Flatten {};

using Layer = std::variant<ConvLayer, PoolSpec, Flatten, DenseLayer>;

/** A chain of layers applied to one sample (dense-only chains also accept [batch, in]). */
class Sequential {
 public:
  struct Tape {
    std::vector<Tensor> activations;  // activations[0] is the input, activations[k+1] the output of layer k
    std::vector<PoolResult> pools;    // aligned with layers; filled for pool layers only
  };

  void add(Layer layer) { layers_.push_back(std::move(layer)); }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /** Output shape for a given input shape; throws ShapeMismatch if any layer does not fit. */
  Shape output_shape(const Shape& input) const;

  Tensor forward(const Tensor& input, Tape* tape = nullptr) const;

  /**
   * Accumulates parameter gradients into `grad` (a zeros_like copy of this
   * chain). Returns the input gradient, or an empty tensor if not requested.
   */
  Tensor backward(const Tape& tape, const Tensor& grad_output, Sequential& grad,
                  bool want_input_grad = false) const;

  Sequential zeros_like() const;

  /** Weight and bias tensors in layer order, named "<prefix><index>.weight" / ".bias". */
  std::vector<std::pair<std::string, Tensor*>> named_parameters(const std::string& prefix);

 private:
  std::vector<Layer> layers_;
};

/** Hash of the ReLU on/off pattern and pooling winners recorded in a tape. */
std::uint64_t region_signature(const Sequential& net, const Sequential::Tape& tape, std::uint64_t seed = 0);

/** Folds ReLU on/off bits of `values` into a running FNV-1a hash. */
std::uint64_t fold_relu_pattern(std::uint64_t hash, const Tensor& values) noexcept;

}  // namespace hstf::nn

#endif  // HSTF_NN_SEQUENTIAL_HPP
