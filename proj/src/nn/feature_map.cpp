#include "hstf/nn/feature_map.hpp"

#include <algorithm>

#include "hstf/error.hpp"

namespace hstf::nn {
namespace {

// Output windows that start inside an active extent of `a` cells.
std::size_t active_extent(std::size_t a, std::size_t full_out, std::size_t stride) {
  if (a == 0) return 0;
  return std::min(full_out, (a + stride - 1) / stride);
}

std::size_t band_extent(std::size_t active_out, std::size_t k, std::size_t stride) {
  return active_out == 0 ? 0 : (active_out - 1) * stride + k;
}

Tensor materialize(const FeatureMap& in, std::size_t bh, std::size_t bw) {
  Tensor band({in.channels, bh, bw});
  const std::size_t rows = std::min(in.active_h, bh);
  const std::size_t cols = std::min(in.active_w, bw);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double* dst = band.data() + c * bh * bw;
    std::fill_n(dst, bh * bw, in.fill[c]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(in.active.data() + (c * in.active_h + r) * in.active_w, cols, dst + r * bw);
    }
  }
  return band;
}

// Routes a band gradient back to the input layout: cells inside the active
// rectangle keep their own gradient, the rest fold into the channel constant.
void scatter_band(const Tensor& dband, const FeatureMap& in, FeatureMapGrad& out) {
  const std::size_t bh = dband.dim(1), bw = dband.dim(2);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* src = dband.data() + c * bh * bw;
    double outside = 0.0;
    for (std::size_t r = 0; r < bh; ++r) {
      for (std::size_t col = 0; col < bw; ++col) {
        const double g = src[r * bw + col];
        if (r < in.active_h && col < in.active_w) {
          out.active[(c * in.active_h + r) * in.active_w + col] += g;
        } else {
          outside += g;
        }
      }
    }
    out.fill[c] += outside;
  }
}

FeatureMapGrad zero_grad(const FeatureMap& in) {
  FeatureMapGrad g;
  if (in.active_h > 0) g.active = Tensor({in.channels, in.active_h, in.active_w});
  g.fill.assign(in.channels, 0.0);
  return g;
}

}  // namespace

void FeatureMap::dense_into(double* out) const {
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = out + c * height * width;
    std::fill_n(dst, height * width, fill[c]);
    for (std::size_t r = 0; r < active_h; ++r) {
      std::copy_n(active.data() + (c * active_h + r) * active_w, active_w, dst + r * width);
    }
  }
}

Tensor FeatureMap::dense() const {
  Tensor t({channels, height, width});
  dense_into(t.data());
  return t;
}

FeatureMap image_map(const Tensor& block, std::size_t height, std::size_t width) {
  FeatureMap m;
  m.channels = 1;
  m.height = height;
  m.width = width;
  m.fill = {0.0};
  if (!block.empty()) {
    if (block.rank() != 2 || block.dim(0) > height || block.dim(1) > width) {
      throw Error(Errc::ShapeMismatch, "image block " + shape_string(block.shape()) + " exceeds " +
                                           std::to_string(height) + "x" + std::to_string(width));
    }
    m.active_h = block.dim(0);
    m.active_w = block.dim(1);
    m.active = block.reshaped({1, m.active_h, m.active_w});
  }
  return m;
}

FeatureMap image_map_from_dense(const Tensor& image) {
  if (image.rank() != 2) throw Error(Errc::ShapeMismatch, "expected a rank-2 image");
  const std::size_t h = image.dim(0), w = image.dim(1);
  std::size_t ah = 0, aw = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (image.at(r, c) != 0.0) {
        ah = r + 1;
        aw = std::max(aw, c + 1);
      }
    }
  }
  if (ah == 0) return image_map(Tensor{}, h, w);
  Tensor block({ah, aw});
  for (std::size_t r = 0; r < ah; ++r) std::copy_n(image.data() + r * w, aw, block.data() + r * aw);
  return image_map(block, h, w);
}

FeatureMapGrad split_grad(const double* g, const FeatureMap& like) {
  FeatureMapGrad out = zero_grad(like);
  const std::size_t h = like.height, w = like.width;
  for (std::size_t c = 0; c < like.channels; ++c) {
    const double* src = g + c * h * w;
    double outside = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
      const std::size_t inside = r < like.active_h ? like.active_w : 0;
      if (inside) std::copy_n(src + r * w, inside, out.active.data() + (c * like.active_h + r) * like.active_w);
      for (std::size_t col = inside; col < w; ++col) outside += src[r * w + col];
    }
    out.fill[c] = outside;
  }
  return out;
}

FeatureMapGrad split_grad(const Tensor& dense_grad, const FeatureMap& like) {
  if (dense_grad.size() != like.channels * like.height * like.width) {
    throw Error(Errc::ShapeMismatch, "gradient size does not match feature map");
  }
  return split_grad(dense_grad.data(), like);
}

FeatureMap conv_forward(const FeatureMap& input, const ConvLayer& layer, MapCache* cache) {
  if (input.channels != layer.channels()) {
    throw Error(Errc::ShapeMismatch, "conv expects " + std::to_string(layer.channels()) + " channels, got " +
                                         std::to_string(input.channels));
  }
  const std::size_t k = layer.kernels(), per_kernel = layer.kernel_h() * layer.kernel_w();
  FeatureMap out;
  out.channels = k;
  out.height = conv_output_dim(input.height, layer.kernel_h(), layer.stride_h);
  out.width = conv_output_dim(input.width, layer.kernel_w(), layer.stride_w);
  out.fill.assign(k, 0.0);
  for (std::size_t kk = 0; kk < k; ++kk) {
    double a = layer.bias[kk];
    for (std::size_t c = 0; c < input.channels; ++c) {
      const double* w = layer.weight.data() + (kk * input.channels + c) * per_kernel;
      double wsum = 0.0;
      for (std::size_t j = 0; j < per_kernel; ++j) wsum += w[j];
      a += input.fill[c] * wsum;
    }
    out.fill[kk] = activate(layer.activation, a);
  }
  const std::size_t oh = active_extent(input.active_h, out.height, layer.stride_h);
  const std::size_t ow = active_extent(input.active_w, out.width, layer.stride_w);
  if (oh > 0 && ow > 0) {
    Tensor band = materialize(input, band_extent(oh, layer.kernel_h(), layer.stride_h),
                              band_extent(ow, layer.kernel_w(), layer.stride_w));
    out.active = nn::conv_forward(band, layer);
    out.active_h = oh;
    out.active_w = ow;
    if (cache) cache->band = std::move(band);
  }
  return out;
}

FeatureMap pool_forward(const FeatureMap& input, const PoolSpec& spec, MapCache* cache) {
  FeatureMap out;
  out.channels = input.channels;
  out.height = conv_output_dim(input.height, spec.window_h, spec.stride_h);
  out.width = conv_output_dim(input.width, spec.window_w, spec.stride_w);
  out.fill = input.fill;
  const std::size_t oh = active_extent(input.active_h, out.height, spec.stride_h);
  const std::size_t ow = active_extent(input.active_w, out.width, spec.stride_w);
  if (oh > 0 && ow > 0) {
    Tensor band = materialize(input, band_extent(oh, spec.window_h, spec.stride_h),
                              band_extent(ow, spec.window_w, spec.stride_w));
    PoolResult r = max_pool(band, spec.window_h, spec.window_w, spec.stride_h, spec.stride_w);
    out.active = r.output;
    out.active_h = oh;
    out.active_w = ow;
    if (cache) {
      cache->band = std::move(band);
      cache->pool = std::move(r);
    }
  }
  return out;
}

FeatureMapGrad conv_backward(const FeatureMap& input, const FeatureMap& output, const MapCache& cache,
                             const ConvLayer& layer, const FeatureMapGrad& grad_output, ConvLayer& grad,
                             bool want_input_grad) {
  const std::size_t k = layer.kernels(), channels = input.channels;
  const std::size_t per_kernel = layer.kernel_h() * layer.kernel_w();
  FeatureMapGrad din = zero_grad(input);

  // Constant region: out_fill[k] = act(b[k] + sum_c fill[c] * sum(w[k,c])).
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double dz = grad_output.fill[kk] * activation_derivative(layer.activation, output.fill[kk]);
    if (dz == 0.0) continue;
    grad.bias[kk] += dz;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* w = layer.weight.data() + (kk * channels + c) * per_kernel;
      double* gw = grad.weight.data() + (kk * channels + c) * per_kernel;
      double wsum = 0.0;
      for (std::size_t j = 0; j < per_kernel; ++j) {
        gw[j] += dz * input.fill[c];
        wsum += w[j];
      }
      din.fill[c] += dz * wsum;
    }
  }

  if (output.active_h > 0) {
    const Tensor dband = nn::conv_backward(cache.band, output.active, layer, grad_output.active, grad,
                                           want_input_grad);
    if (want_input_grad) scatter_band(dband, input, din);
  }
  return din;
}

FeatureMapGrad pool_backward(const FeatureMap& input, const FeatureMap& output, const MapCache& cache,
                             const FeatureMapGrad& grad_output) {
  FeatureMapGrad din = zero_grad(input);
  din.fill = grad_output.fill;
  if (output.active_h > 0) scatter_band(max_pool_backward(cache.pool, grad_output.active), input, din);
  return din;
}

}  // namespace hstf::nn
