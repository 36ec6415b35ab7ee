#ifndef HSTF_NN_OPTIM_HPP
#define HSTF_NN_OPTIM_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "hstf/nn/tensor.hpp"

namespace hstf::nn {

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind) noexcept;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/** Applies one update per call to a fixed, ordered list of parameter tensors. */
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {});

  /** params[k] is moved against grads[k]; shapes must not change between calls. */
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

  std::size_t steps() const noexcept { return steps_; }
  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace hstf::nn

#endif  // HSTF_NN_OPTIM_HPP
