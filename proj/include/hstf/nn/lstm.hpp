#ifndef HSTF_NN_LSTM_HPP
#define HSTF_NN_LSTM_HPP

#include <cstddef>

#include "hstf/nn/tensor.hpp"

namespace hstf::nn {

/**
 * LSTM cell. Each gate weight is hidden x (hidden + input) and multiplies the
 * concatenation [h_prev, x]; the first `hidden` columns act on h_prev.
 *
 *   i = sigmoid(W_i z + b_i)   f = sigmoid(W_f z + b_f)   o = sigmoid(W_o z + b_o)
 *   c~ = tanh(W_c z + b_c)     c = f*c_prev + i*c~        h = o*tanh(c)
 */
struct LstmCell {
  Tensor w_i, w_f, w_c, w_o;
  Tensor b_i, b_f, b_c, b_o;

  std::size_t hidden_size() const { return w_i.dim(0); }
  std::size_t input_size() const { return w_i.dim(1) - w_i.dim(0); }

  bool operator==(const LstmCell&) const = default;
};

LstmCell make_lstm(std::size_t hidden, std::size_t input);
LstmCell zeros_like(const LstmCell& cell);

/** Cell and hidden state, each [hidden] or [batch, hidden]. */
struct LstmState {
  Tensor c;
  Tensor h;
};

LstmState zero_state(std::size_t hidden, std::size_t batch = 0);

/** Intermediate values kept by a forward step for its backward step. */
struct LstmStepCache {
  Tensor z;  // [batch, hidden + input]
  Tensor i, f, c_tilde, o;
  Tensor c_prev, tanh_c;
};

/** x is [input] (with a rank-1 state) or [batch, input]. */
LstmState lstm_step(const LstmCell& cell, const LstmState& state, const Tensor& x, LstmStepCache* cache = nullptr);

struct LstmStepGrad {
  Tensor h_prev;
  Tensor c_prev;
  Tensor x;
};

/**
 * Back-propagates gradients of h and c through one step, accumulating weight
 * gradients into `grad`. Either incoming gradient may be empty (treated as 0).
 */
LstmStepGrad lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache, const Tensor& grad_h,
                                const Tensor& grad_c, LstmCell& grad);

}  // namespace hstf::nn

#endif  // HSTF_NN_LSTM_HPP
