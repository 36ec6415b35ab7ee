#include "hstf/nn/sequential.hpp"

#include <type_traits>

#include "hstf/error.hpp"

namespace hstf::nn {
namespace {

constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

std::uint64_t fold(std::uint64_t h, std::uint64_t v) noexcept { return (h ^ v) * kFnvPrime; }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const Layer& layer : layers_) {
    std::visit(Overloaded{
                   [&](const ConvLayer& c) {
                     const std::size_t ch = s.size() == 2 ? 1 : (s.size() == 3 ? s[0] : 0);
                     if (ch != c.channels()) throw Error(Errc::ShapeMismatch, "conv channel mismatch");
                     const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
                     s = {c.kernels(), conv_output_dim(h, c.kernel_h(), c.stride_h),
                          conv_output_dim(w, c.kernel_w(), c.stride_w)};
                   },
                   [&](const PoolSpec& p) {
                     if (s.size() < 2) throw Error(Errc::ShapeMismatch, "pooling needs a 2D or 3D input");
                     s[s.size() - 2] = conv_output_dim(s[s.size() - 2], p.window_h, p.stride_h);
                     s[s.size() - 1] = conv_output_dim(s[s.size() - 1], p.window_w, p.stride_w);
                   },
                   [&](const Flatten&) { s = {shape_size(s)}; },
                   [&](const DenseLayer& d) {
                     if (s.empty() || s.back() != d.inputs()) {
                       throw Error(Errc::ShapeMismatch, "dense expects " + std::to_string(d.inputs()) +
                                                            " inputs, got " + shape_string(s));
                     }
                     s.back() = d.outputs();
                   },
               },
               layer);
  }
  return s;
}

Tensor Sequential::forward(const Tensor& input, Tape* tape) const {
  if (tape) {
    tape->activations.clear();
    tape->pools.assign(layers_.size(), PoolResult{});
    tape->activations.push_back(input);
  }
  Tensor x = input;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    x = std::visit(Overloaded{
                       [&](const ConvLayer& c) { return conv_forward(x, c); },
                       [&](const PoolSpec& p) {
                         PoolResult r = max_pool(x, p.window_h, p.window_w, p.stride_h, p.stride_w);
                         Tensor out = r.output;
                         if (tape) tape->pools[k] = std::move(r);
                         return out;
                       },
                       [&](const Flatten&) { return x.reshaped({x.size()}); },
                       [&](const DenseLayer& d) { return dense_forward(x, d); },
                   },
                   layers_[k]);
    if (tape) tape->activations.push_back(x);
  }
  return x;
}

Tensor Sequential::backward(const Tape& tape, const Tensor& grad_output, Sequential& grad,
                            bool want_input_grad) const {
  if (tape.activations.size() != layers_.size() + 1 || grad.layers_.size() != layers_.size()) {
    throw Error(Errc::ShapeMismatch, "tape or gradient chain does not match the network");
  }
  Tensor g = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const bool need_input = want_input_grad || k > 0;
    const Tensor& in = tape.activations[k];
    const Tensor& out = tape.activations[k + 1];
    g = std::visit(Overloaded{
                       [&](const ConvLayer& c) {
                         return conv_backward(in, out, c, g, std::get<ConvLayer>(grad.layers_[k]), need_input);
                       },
                       [&](const PoolSpec&) { return max_pool_backward(tape.pools[k], g); },
                       [&](const Flatten&) { return g.reshaped(in.shape()); },
                       [&](const DenseLayer& d) {
                         return dense_backward(in, out, d, g, std::get<DenseLayer>(grad.layers_[k]), need_input);
                       },
                   },
                   layers_[k]);
    if (!need_input) break;
  }
  return want_input_grad ? g : Tensor{};
}

Sequential Sequential::zeros_like() const {
  Sequential z;
  for (const Layer& layer : layers_) {
    z.add(std::visit(
        [](const auto& l) -> Layer {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer> || std::is_same_v<T, DenseLayer>) {
            return nn::zeros_like(l);
          } else {
            return l;
          }
        },
        layer));
  }
  return z;
}

std::vector<std::pair<std::string, Tensor*>> Sequential::named_parameters(const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::string base = prefix + std::to_string(k);
    if (auto* c = std::get_if<ConvLayer>(&layers_[k])) {
      out.emplace_back(base + ".weight", &c->weight);
      out.emplace_back(base + ".bias", &c->bias);
    } else if (auto* d = std::get_if<DenseLayer>(&layers_[k])) {
      out.emplace_back(base + ".weight", &d->weight);
      out.emplace_back(base + ".bias", &d->bias);
    }
  }
  return out;
}

std::uint64_t fold_relu_pattern(std::uint64_t hash, const Tensor& values) noexcept {
  std::uint64_t word = 0;
  std::size_t bits = 0;
  for (double v : values.values()) {
    word = (word << 1) | (v > 0 ? 1u : 0u);
    if (++bits == 64) {
      hash = fold(hash, word);
      word = 0;
      bits = 0;
    }
  }
  return fold(fold(hash, word), bits);
}

std::uint64_t region_signature(const Sequential& net, const Sequential::Tape& tape, std::uint64_t seed) {
  std::uint64_t h = fold(kFnvOffset, seed);
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Activation act = Activation::Identity;
    if (const auto* c = std::get_if<ConvLayer>(&layers[k])) act = c->activation;
    if (const auto* d = std::get_if<DenseLayer>(&layers[k])) act = d->activation;
    if (act == Activation::Relu) h = fold_relu_pattern(h, tape.activations[k + 1]);
    if (std::holds_alternative<PoolSpec>(layers[k])) {
      for (std::uint32_t a : tape.pools[k].argmax) h = fold(h, a);
    }
  }
  return h;
}

}  // namespace hstf::nn
