/**
 * Forward and backward passes for convolution, max pooling and dense layers.
 *
 * Backward functions accumulate parameter gradients into a caller-owned
 * layer of the same shape (so gradients sum across a batch) and return the
 * gradient with respect to the layer input.
 */

#ifndef HSTF_NN_LAYERS_HPP
#define HSTF_NN_LAYERS_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hstf/nn/tensor.hpp"

namespace hstf::nn {

enum class Activation { Identity, Relu, Sigmoid, Tanh };

double activate(Activation act, double x) noexcept;
/** Derivative expressed through the activation output y = act(x). */
double activation_derivative(Activation act, double y) noexcept;
void activate_inplace(Activation act, std::span<double> values) noexcept;

double sigmoid(double x) noexcept;

/** Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)). */
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

struct ConvLayer {
  Tensor weight;  // kernels x channels x kernel_h x kernel_w
  Tensor bias;    // kernels
  Activation activation = Activation::Relu;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;

  std::size_t kernels() const { return weight.dim(0); }
  std::size_t channels() const { return weight.dim(1); }
  std::size_t kernel_h() const { return weight.dim(2); }
  std::size_t kernel_w() const { return weight.dim(3); }

  bool operator==(const ConvLayer&) const = default;
};

/** Zero weights; stride defaults to 1 in both directions. */
ConvLayer make_conv(std::size_t kernels, std::size_t channels, std::size_t kernel_h, std::size_t kernel_w,
                    Activation activation = Activation::Relu);
ConvLayer zeros_like(const ConvLayer& layer);

/** floor((in - k) / stride) + 1; throws ShapeMismatch when k > in or stride is 0. */
std::size_t conv_output_dim(std::size_t in, std::size_t k, std::size_t stride);

/**
 * Valid (unpadded) cross-correlation followed by the activation:
 * out[k,i,j] = act(b[k] + sum_c sum_m sum_n x[c, i*sh+m, j*sw+n] * w[k,c,m,n]).
 * Input is channels x H x W (a rank-2 H x W input is one channel).
 */
Tensor conv_forward(const Tensor& input, const ConvLayer& layer);

/**
 * `output` is the value returned by conv_forward. Returns the input gradient
 * (input shape) or an empty tensor when `want_input_grad` is false.
 */
Tensor conv_backward(const Tensor& input, const Tensor& output, const ConvLayer& layer, const Tensor& grad_output,
                     ConvLayer& grad, bool want_input_grad = true);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index feeding each output cell
  Shape input_shape;
};

/** Per-channel max over windows; ties resolve to the first (row-major) cell. */
PoolResult max_pool(const Tensor& input, std::size_t window_h, std::size_t window_w, std::size_t stride_h,
                    std::size_t stride_w);
Tensor max_pool_backward(const PoolResult& pool, const Tensor& grad_output);

struct DenseLayer {
  Tensor weight;  // outputs x inputs
  Tensor bias;    // outputs
  Activation activation = Activation::Identity;

  std::size_t inputs() const { return weight.dim(1); }
  std::size_t outputs() const { return weight.dim(0); }

  bool operator==(const DenseLayer&) const = default;
};

DenseLayer make_dense(std::size_t inputs, std::size_t outputs, Activation activation = Activation::Identity);
DenseLayer zeros_like(const DenseLayer& layer);

/** y = act(W x + b) for x of shape [inputs] or [batch, inputs]. */
Tensor dense_forward(const Tensor& x, const DenseLayer& layer);
Tensor dense_backward(const Tensor& x, const Tensor& y, const DenseLayer& layer, const Tensor& grad_y,
                      DenseLayer& grad, bool want_input_grad = true);

/** Binary cross-entropy of sigmoid(logit) against a 0/1 target, computed stably. */
double bce_with_logit(double logit, double target) noexcept;
/** d bce / d logit = sigmoid(logit) - target. */
double bce_with_logit_grad(double logit, double target) noexcept;

/** y += alpha * x over equal-sized tensors. */
void axpy(double alpha, const Tensor& x, Tensor& y);

}  // namespace hstf::nn

#endif  // HSTF_NN_LAYERS_HPP
