/**
 * Feature maps that hold explicit values only inside a top-left rectangle and
 * one constant per channel everywhere else.
 *
 * A mostly-zero input image (short message lines, few rows) keeps this form
 * through valid convolutions and max pooling: any output window lying wholly
 * outside the input rectangle sees only the channel constants, so it also
 * evaluates to a constant. Work is then proportional to the rectangle rather
 * than to the full map. All results equal the dense ops exactly.
 */

#ifndef HSTF_NN_FEATURE_MAP_HPP
#define HSTF_NN_FEATURE_MAP_HPP

#include <cstddef>
#include <vector>

#include "hstf/nn/layers.hpp"
#include "hstf/nn/sequential.hpp"
#include "hstf/nn/tensor.hpp"

namespace hstf::nn {

struct FeatureMap {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t active_h = 0;  // both 0 when there is no explicit region
  std::size_t active_w = 0;
  Tensor active;             // channels x active_h x active_w (empty when no explicit region)
  std::vector<double> fill;  // one value per channel

  /** Expands to channels x height x width. */
  Tensor dense() const;
  /** Writes the dense expansion to `out` (channels*height*width values). */
  void dense_into(double* out) const;
};

/**
 * Single-channel map from an explicit top-left block (rank-2 `block`, or
 * empty for an all-zero image); everything outside is 0.
 */
FeatureMap image_map(const Tensor& block, std::size_t height, std::size_t width);

/** Smallest top-left block of a rank-2 image that holds every non-zero value. */
FeatureMap image_map_from_dense(const Tensor& image);

/** Gradient with respect to a FeatureMap: per active cell, plus summed over each channel's constant region. */
struct FeatureMapGrad {
  Tensor active;
  std::vector<double> fill;
};

/** Splits a dense gradient (shape of `like.dense()`) into the FeatureMap layout. */
FeatureMapGrad split_grad(const Tensor& dense_grad, const FeatureMap& like);
FeatureMapGrad split_grad(const double* dense_grad, const FeatureMap& like);

/** Explicit input values a layer window consumed, kept for the backward pass. */
struct MapCache {
  Tensor band;        // materialized input around the active rectangle
  PoolResult pool;    // pooling winners inside the band (pool layers only)
};

FeatureMap conv_forward(const FeatureMap& input, const ConvLayer& layer, MapCache* cache = nullptr);
FeatureMap pool_forward(const FeatureMap& input, const PoolSpec& spec, MapCache* cache = nullptr);

/**
 * `output` is the result of conv_forward on `input`. Weight gradients
 * accumulate into `grad`; the input gradient is returned when requested.
 */
FeatureMapGrad conv_backward(const FeatureMap& input, const FeatureMap& output, const MapCache& cache,
                             const ConvLayer& layer, const FeatureMapGrad& grad_output, ConvLayer& grad,
                             bool want_input_grad);
FeatureMapGrad pool_backward(const FeatureMap& input, const FeatureMap& output, const MapCache& cache,
                             const FeatureMapGrad& grad_output);

}  // namespace hstf::nn

#endif  // HSTF_NN_FEATURE_MAP_HPP
