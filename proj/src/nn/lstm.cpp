#include "hstf/nn/lstm.hpp"

#include <cblas.h>

#include <cmath>

#include "hstf/error.hpp"
#include "hstf/nn/layers.hpp"

namespace hstf::nn {
namespace {

struct Dims {
  std::size_t batch, hidden, input;
};

// out[b, :] = bias + z[b, :] . W^T, then the gate nonlinearity.
Tensor gate(const Tensor& z, const Tensor& w, const Tensor& b, const Dims& d, Activation act) {
  const std::size_t width = d.hidden + d.input;
  Tensor out({d.batch, d.hidden});
  for (std::size_t r = 0; r < d.batch; ++r) std::copy_n(b.data(), d.hidden, out.data() + r * d.hidden);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(d.batch), static_cast<int>(d.hidden),
              static_cast<int>(width), 1.0, z.data(), static_cast<int>(width), w.data(), static_cast<int>(width), 1.0,
              out.data(), static_cast<int>(d.hidden));
  activate_inplace(act, out.values());
  return out;
}

void accumulate_gate_grad(const std::vector<double>& da, const Tensor& z, const Tensor& w, const Dims& d,
                          Tensor& grad_w, Tensor& grad_b, Tensor& grad_z) {
  const int width = static_cast<int>(d.hidden + d.input);
  for (std::size_t r = 0; r < d.batch; ++r) {
    for (std::size_t k = 0; k < d.hidden; ++k) grad_b[k] += da[r * d.hidden + k];
  }
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(d.hidden), width, static_cast<int>(d.batch),
              1.0, da.data(), static_cast<int>(d.hidden), z.data(), width, 1.0, grad_w.data(), width);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(d.batch), width, static_cast<int>(d.hidden),
              1.0, da.data(), static_cast<int>(d.hidden), w.data(), width, 1.0, grad_z.data(), width);
}

}  // namespace

LstmCell make_lstm(std::size_t hidden, std::size_t input) {
  LstmCell cell;
  for (Tensor* w : {&cell.w_i, &cell.w_f, &cell.w_c, &cell.w_o}) *w = Tensor({hidden, hidden + input});
  for (Tensor* b : {&cell.b_i, &cell.b_f, &cell.b_c, &cell.b_o}) *b = Tensor({hidden});
  return cell;
}

LstmCell zeros_like(const LstmCell& cell) { return make_lstm(cell.hidden_size(), cell.input_size()); }

LstmState zero_state(std::size_t hidden, std::size_t batch) {
  if (batch == 0) return {Tensor({hidden}), Tensor({hidden})};
  return {Tensor({batch, hidden}), Tensor({batch, hidden})};
}

LstmState lstm_step(const LstmCell& cell, const LstmState& state, const Tensor& x, LstmStepCache* cache) {
  const std::size_t hidden = cell.hidden_size();
  const std::size_t input = cell.input_size();
  const bool single = x.rank() == 1;
  const std::size_t batch = single ? 1 : x.dim(0);
  const std::size_t x_width = single ? x.dim(0) : (x.rank() == 2 ? x.dim(1) : 0);
  if (x_width != input) {
    throw Error(Errc::ShapeMismatch, "lstm input " + shape_string(x.shape()) + " does not match input size " +
                                         std::to_string(input));
  }
  if (state.h.size() != batch * hidden || state.c.size() != batch * hidden) {
    throw Error(Errc::ShapeMismatch, "lstm state " + shape_string(state.h.shape()) + " does not match batch " +
                                         std::to_string(batch) + " x hidden " + std::to_string(hidden));
  }
  const Dims d{batch, hidden, input};

  Tensor z({batch, hidden + input});
  for (std::size_t r = 0; r < batch; ++r) {
    double* row = z.data() + r * (hidden + input);
    std::copy_n(state.h.data() + r * hidden, hidden, row);
    std::copy_n(x.data() + r * input, input, row + hidden);
  }
  Tensor i = gate(z, cell.w_i, cell.b_i, d, Activation::Sigmoid);
  Tensor f = gate(z, cell.w_f, cell.b_f, d, Activation::Sigmoid);
  Tensor c_tilde = gate(z, cell.w_c, cell.b_c, d, Activation::Tanh);
  Tensor o = gate(z, cell.w_o, cell.b_o, d, Activation::Sigmoid);

  LstmState next{Tensor(state.c.shape()), Tensor(state.h.shape())};
  Tensor tanh_c({batch, hidden});
  for (std::size_t k = 0; k < batch * hidden; ++k) {
    next.c[k] = f[k] * state.c[k] + i[k] * c_tilde[k];
    tanh_c[k] = std::tanh(next.c[k]);
    next.h[k] = o[k] * tanh_c[k];
  }
  if (cache) {
    cache->z = std::move(z);
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->c_tilde = std::move(c_tilde);
    cache->o = std::move(o);
    cache->c_prev = state.c.reshaped({batch, hidden});
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

LstmStepGrad lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache, const Tensor& grad_h,
                                const Tensor& grad_c, LstmCell& grad) {
  const std::size_t hidden = cell.hidden_size();
  const std::size_t input = cell.input_size();
  const std::size_t batch = cache.z.dim(0);
  const std::size_t n = batch * hidden;
  if ((!grad_h.empty() && grad_h.size() != n) || (!grad_c.empty() && grad_c.size() != n)) {
    throw Error(Errc::ShapeMismatch, "lstm backward gradient size mismatch");
  }
  const Dims d{batch, hidden, input};

  std::vector<double> da_i(n), da_f(n), da_c(n), da_o(n);
  Tensor dc_prev({batch, hidden});
  for (std::size_t k = 0; k < n; ++k) {
    const double dh = grad_h.empty() ? 0.0 : grad_h[k];
    const double tc = cache.tanh_c[k];
    const double dc = (grad_c.empty() ? 0.0 : grad_c[k]) + dh * cache.o[k] * (1.0 - tc * tc);
    const double i = cache.i[k], f = cache.f[k], g = cache.c_tilde[k], o = cache.o[k];
    da_o[k] = dh * tc * o * (1.0 - o);
    da_i[k] = dc * g * i * (1.0 - i);
    da_f[k] = dc * cache.c_prev[k] * f * (1.0 - f);
    da_c[k] = dc * i * (1.0 - g * g);
    dc_prev[k] = dc * f;
  }

  Tensor dz({batch, hidden + input});
  accumulate_gate_grad(da_i, cache.z, cell.w_i, d, grad.w_i, grad.b_i, dz);
  accumulate_gate_grad(da_f, cache.z, cell.w_f, d, grad.w_f, grad.b_f, dz);
  accumulate_gate_grad(da_c, cache.z, cell.w_c, d, grad.w_c, grad.b_c, dz);
  accumulate_gate_grad(da_o, cache.z, cell.w_o, d, grad.w_o, grad.b_o, dz);

  LstmStepGrad out{Tensor({batch, hidden}), std::move(dc_prev), Tensor({batch, input})};
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = dz.data() + r * (hidden + input);
    std::copy_n(row, hidden, out.h_prev.data() + r * hidden);
    std::copy_n(row + hidden, input, out.x.data() + r * input);
  }
  return out;
}

}  // namespace hstf::nn
