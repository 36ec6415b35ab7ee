#include "hstf/nn/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "hstf/error.hpp"

namespace hstf::nn {
namespace {

// Single-threaded BLAS keeps every reduction in a fixed order, so repeated
// runs with the same seed produce identical bits.
[[maybe_unused]] const bool kBlasPinned = [] {
  openblas_set_num_threads(1);
  return true;
}();

struct Geometry {
  std::size_t c, h, w;
};

Geometry image_geometry(const Tensor& input) {
  if (input.rank() == 2) return {1, input.dim(0), input.dim(1)};
  if (input.rank() == 3) return {input.dim(0), input.dim(1), input.dim(2)};
  throw Error(Errc::ShapeMismatch, "expected HxW or CxHxW input, got " + shape_string(input.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch,
                std::string(what) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// Column matrix of shape (C*kh*kw) x (OH*OW).
std::vector<double> im2col(const Tensor& input, const Geometry& g, const ConvLayer& layer, std::size_t oh,
                           std::size_t ow) {
  const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
  const std::size_t p = oh * ow;
  std::vector<double> cols(g.c * kh * kw * p);
  const double* x = input.data();
  double* dst = cols.data();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t m = 0; m < kh; ++m) {
      for (std::size_t n = 0; n < kw; ++n) {
        for (std::size_t i = 0; i < oh; ++i) {
          const double* row = x + (c * g.h + i * layer.stride_h + m) * g.w + n;
          if (layer.stride_w == 1) {
            std::copy_n(row, ow, dst);
          } else {
            for (std::size_t j = 0; j < ow; ++j) dst[j] = row[j * layer.stride_w];
          }
          dst += ow;
        }
      }
    }
  }
  return cols;
}

void col2im(const std::vector<double>& cols, const Geometry& g, const ConvLayer& layer, std::size_t oh,
            std::size_t ow, Tensor& out) {
  const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
  const double* src = cols.data();
  double* x = out.data();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t m = 0; m < kh; ++m) {
      for (std::size_t n = 0; n < kw; ++n) {
        for (std::size_t i = 0; i < oh; ++i) {
          double* row = x + (c * g.h + i * layer.stride_h + m) * g.w + n;
          for (std::size_t j = 0; j < ow; ++j) row[j * layer.stride_w] += src[j];
          src += ow;
        }
      }
    }
  }
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation act, double x) noexcept {
  switch (act) {
    case Activation::Relu:
      return x > 0 ? x : 0.0;
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Identity:
      break;
  }
  return x;
}

double activation_derivative(Activation act, double y) noexcept {
  switch (act) {
    case Activation::Relu:
      return y > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid:
      return y * (1.0 - y);
    case Activation::Tanh:
      return 1.0 - y * y;
    case Activation::Identity:
      break;
  }
  return 1.0;
}

void activate_inplace(Activation act, std::span<double> values) noexcept {
  if (act == Activation::Identity) return;
  for (double& v : values) v = activate(act, v);
}

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-r, r);
  for (double& v : t.values()) v = dist(rng);
}

ConvLayer make_conv(std::size_t kernels, std::size_t channels, std::size_t kernel_h, std::size_t kernel_w,
                    Activation activation) {
  ConvLayer layer;
  layer.weight = Tensor({kernels, channels, kernel_h, kernel_w});
  layer.bias = Tensor({kernels});
  layer.activation = activation;
  return layer;
}

ConvLayer zeros_like(const ConvLayer& layer) {
  ConvLayer g = layer;
  g.weight.fill(0.0);
  g.bias.fill(0.0);
  return g;
}

std::size_t conv_output_dim(std::size_t in, std::size_t k, std::size_t stride) {
  if (stride == 0) throw Error(Errc::ShapeMismatch, "stride must be at least 1");
  if (k > in) {
    throw Error(Errc::ShapeMismatch,
                "window " + std::to_string(k) + " larger than input extent " + std::to_string(in));
  }
  return (in - k) / stride + 1;
}

Tensor conv_forward(const Tensor& input, const ConvLayer& layer) {
  const Geometry g = image_geometry(input);
  if (g.c != layer.channels()) {
    throw Error(Errc::ShapeMismatch, "conv expects " + std::to_string(layer.channels()) + " channels, got " +
                                         std::to_string(g.c));
  }
  const std::size_t oh = conv_output_dim(g.h, layer.kernel_h(), layer.stride_h);
  const std::size_t ow = conv_output_dim(g.w, layer.kernel_w(), layer.stride_w);
  const std::size_t k = layer.kernels();
  const std::size_t r = g.c * layer.kernel_h() * layer.kernel_w();
  const std::size_t p = oh * ow;

  const std::vector<double> cols = im2col(input, g, layer, oh, ow);
  Tensor out({k, oh, ow});
  for (std::size_t kk = 0; kk < k; ++kk) std::fill_n(out.data() + kk * p, p, layer.bias[kk]);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(k), static_cast<int>(p),
              static_cast<int>(r), 1.0, layer.weight.data(), static_cast<int>(r), cols.data(), static_cast<int>(p),
              1.0, out.data(), static_cast<int>(p));
  activate_inplace(layer.activation, out.values());
  return out;
}

Tensor conv_backward(const Tensor& input, const Tensor& output, const ConvLayer& layer, const Tensor& grad_output,
                     ConvLayer& grad, bool want_input_grad) {
  const Geometry g = image_geometry(input);
  require_same_shape(output, grad_output, "conv_backward grad_output");
  require_same_shape(grad.weight, layer.weight, "conv_backward grad weight");
  const std::size_t oh = output.dim(1), ow = output.dim(2);
  const std::size_t k = layer.kernels();
  const std::size_t r = g.c * layer.kernel_h() * layer.kernel_w();
  const std::size_t p = oh * ow;

  std::vector<double> dz(grad_output.values().begin(), grad_output.values().end());
  if (layer.activation != Activation::Identity) {
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activation_derivative(layer.activation, output[i]);
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    double s = 0.0;
    for (std::size_t i = 0; i < p; ++i) s += dz[kk * p + i];
    grad.bias[kk] += s;
  }
  const std::vector<double> cols = im2col(input, g, layer, oh, ow);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(k), static_cast<int>(r),
              static_cast<int>(p), 1.0, dz.data(), static_cast<int>(p), cols.data(), static_cast<int>(p), 1.0,
              grad.weight.data(), static_cast<int>(r));
  if (!want_input_grad) return {};

  std::vector<double> dcols(r * p);
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(r), static_cast<int>(p),
              static_cast<int>(k), 1.0, layer.weight.data(), static_cast<int>(r), dz.data(), static_cast<int>(p),
              0.0, dcols.data(), static_cast<int>(p));
  Tensor dx(input.shape());
  col2im(dcols, g, layer, oh, ow, dx);
  return dx;
}

PoolResult max_pool(const Tensor& input, std::size_t window_h, std::size_t window_w, std::size_t stride_h,
                    std::size_t stride_w) {
  const Geometry g = image_geometry(input);
  const std::size_t oh = conv_output_dim(g.h, window_h, stride_h);
  const std::size_t ow = conv_output_dim(g.w, window_w, stride_w);
  PoolResult res;
  res.input_shape = input.shape();
  res.output = input.rank() == 2 ? Tensor({oh, ow}) : Tensor({g.c, oh, ow});
  res.argmax.resize(res.output.size());
  const double* x = input.data();
  std::size_t o = 0;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = (c * g.h + i * stride_h) * g.w + j * stride_w;
        for (std::size_t m = 0; m < window_h; ++m) {
          const std::size_t base = (c * g.h + i * stride_h + m) * g.w + j * stride_w;
          for (std::size_t n = 0; n < window_w; ++n) {
            if (x[base + n] > x[best]) best = base + n;
          }
        }
        res.output[o] = x[best];
        res.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return res;
}

Tensor max_pool_backward(const PoolResult& pool, const Tensor& grad_output) {
  require_same_shape(pool.output, grad_output, "max_pool_backward");
  Tensor dx(pool.input_shape);
  for (std::size_t o = 0; o < grad_output.size(); ++o) dx[pool.argmax[o]] += grad_output[o];
  return dx;
}

DenseLayer make_dense(std::size_t inputs, std::size_t outputs, Activation activation) {
  DenseLayer layer;
  layer.weight = Tensor({outputs, inputs});
  layer.bias = Tensor({outputs});
  layer.activation = activation;
  return layer;
}

DenseLayer zeros_like(const DenseLayer& layer) {
  DenseLayer g = layer;
  g.weight.fill(0.0);
  g.bias.fill(0.0);
  return g;
}

namespace {

std::size_t batch_rows(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() == 1 && x.dim(0) == width) return 1;
  if (x.rank() == 2 && x.dim(1) == width) return x.dim(0);
  throw Error(Errc::ShapeMismatch, std::string(what) + ": expected trailing dimension " + std::to_string(width) +
                                       ", got " + shape_string(x.shape()));
}

}  // namespace

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
  const std::size_t in = layer.inputs(), out = layer.outputs();
  const std::size_t b = batch_rows(x, in, "dense_forward");
  Tensor y = x.rank() == 1 ? Tensor({out}) : Tensor({b, out});
  for (std::size_t r = 0; r < b; ++r) std::copy_n(layer.bias.data(), out, y.data() + r * out);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(b), static_cast<int>(out),
              static_cast<int>(in), 1.0, x.data(), static_cast<int>(in), layer.weight.data(), static_cast<int>(in),
              1.0, y.data(), static_cast<int>(out));
  activate_inplace(layer.activation, y.values());
  return y;
}

Tensor dense_backward(const Tensor& x, const Tensor& y, const DenseLayer& layer, const Tensor& grad_y,
                      DenseLayer& grad, bool want_input_grad) {
  const std::size_t in = layer.inputs(), out = layer.outputs();
  const std::size_t b = batch_rows(x, in, "dense_backward");
  require_same_shape(y, grad_y, "dense_backward grad_y");
  require_same_shape(grad.weight, layer.weight, "dense_backward grad weight");

  std::vector<double> dz(grad_y.values().begin(), grad_y.values().end());
  if (layer.activation != Activation::Identity) {
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activation_derivative(layer.activation, y[i]);
  }
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t o = 0; o < out; ++o) grad.bias[o] += dz[r * out + o];
  }
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(out), static_cast<int>(in),
              static_cast<int>(b), 1.0, dz.data(), static_cast<int>(out), x.data(), static_cast<int>(in), 1.0,
              grad.weight.data(), static_cast<int>(in));
  if (!want_input_grad) return {};
  Tensor dx(x.shape());
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(b), static_cast<int>(in),
              static_cast<int>(out), 1.0, dz.data(), static_cast<int>(out), layer.weight.data(),
              static_cast<int>(in), 0.0, dx.data(), static_cast<int>(in));
  return dx;
}

double bce_with_logit(double logit, double target) noexcept {
  // softplus(z) - t*z, with softplus evaluated without overflow.
  const double softplus = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return softplus - target * logit;
}

double bce_with_logit_grad(double logit, double target) noexcept { return sigmoid(logit) - target; }

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  cblas_daxpy(static_cast<int>(x.size()), alpha, x.data(), 1, y.data(), 1);
}

}  // namespace hstf::nn
