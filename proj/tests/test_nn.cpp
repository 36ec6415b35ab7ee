#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hstf/error.hpp"
#include "hstf/nn/feature_map.hpp"
#include "hstf/nn/gradcheck.hpp"
#include "hstf/nn/layers.hpp"
#include "hstf/nn/lstm.hpp"
#include "hstf/nn/optim.hpp"
#include "hstf/nn/sequential.hpp"
#include "nn_oracles.hpp"

using namespace hstf::nn;
using namespace hstf::testing;

TEST(Tensor, RejectsZeroDimsAndBadValueCounts) {
  EXPECT_THROW(Tensor({2, 0}), hstf::Error);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), hstf::Error);
  EXPECT_THROW(Tensor({2, 3}).reshaped({4}), hstf::Error);
  EXPECT_EQ(Tensor({2, 3}).reshaped({6}).shape(), Shape({6}));
}

TEST(Conv, IdentityKernelReproducesInput) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({1, 5, 7}, rng);
  ConvLayer l = make_conv(1, 1, 1, 1, Activation::Identity);
  l.weight[0] = 1.0;
  EXPECT_EQ(max_abs_diff(conv_forward(x, l), x), 0.0);
}

TEST(Conv, ZeroInputGivesActivatedBias) {
  ConvLayer l = make_conv(3, 1, 3, 3, Activation::Relu);
  l.bias.fill(0.5);
  const Tensor out = conv_forward(Tensor({6, 6}), l);
  EXPECT_EQ(out.shape(), Shape({3, 4, 4}));
  for (double v : out.values()) EXPECT_EQ(v, 0.5);
}

TEST(Conv, MatchesNaiveLoopsOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t c = pick(rng, 1, 3), k = pick(rng, 1, 4), kh = pick(rng, 1, 4), kw = pick(rng, 1, 4);
    ConvLayer l = make_conv(k, c, kh, kw, random_activation(rng));
    l.stride_h = pick(rng, 1, 2);
    l.stride_w = pick(rng, 1, 3);
    l.weight = random_tensor(l.weight.shape(), rng);
    l.bias = random_tensor(l.bias.shape(), rng);
    const Tensor x = random_tensor({c, kh + pick(rng, 0, 6), kw + pick(rng, 0, 6)}, rng);
    EXPECT_LE(max_abs_diff(conv_forward(x, l), naive_conv(x, l)), 1e-12) << "seed " << seed;
  }
}

TEST(Conv, Random6x6With3x3Kernel) {
  std::mt19937_64 rng(42);
  ConvLayer l = make_conv(1, 1, 3, 3, Activation::Identity);
  l.weight = random_tensor(l.weight.shape(), rng);
  const Tensor x = random_tensor({1, 6, 6}, rng);
  EXPECT_LE(max_abs_diff(conv_forward(x, l), naive_conv(x, l)), 1e-12);
}

TEST(Conv, OutputDimsAndShapeErrors) {
  EXPECT_EQ(conv_output_dim(47, 3, 1), 45u);
  EXPECT_EQ(conv_output_dim(10, 3, 2), 4u);
  EXPECT_THROW(conv_output_dim(2, 3, 1), hstf::Error);
  EXPECT_THROW(conv_forward(Tensor({2, 2}), make_conv(1, 1, 3, 3)), hstf::Error);
  EXPECT_THROW(conv_forward(Tensor({2, 5, 5}), make_conv(1, 1, 3, 3)), hstf::Error);
}

TEST(Pool, FullWindowIsGlobalMax) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({4, 5}, rng);
  const PoolResult r = max_pool(x, 4, 5, 1, 1);
  EXPECT_EQ(r.output.size(), 1u);
  EXPECT_EQ(r.output[0], *std::max_element(x.values().begin(), x.values().end()));
}

TEST(Pool, ConstantInputGivesConstantOutput) {
  const PoolResult r = max_pool(Tensor({2, 6, 6}, 0.25), 2, 2, 2, 2);
  for (double v : r.output.values()) EXPECT_EQ(v, 0.25);
}

TEST(Pool, MatchesScanOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t wh = pick(rng, 1, 3), ww = pick(rng, 1, 3);
    const Tensor x = random_tensor({pick(rng, 1, 3), wh + pick(rng, 0, 5), ww + pick(rng, 0, 5)}, rng);
    const std::size_t sh = pick(rng, 1, 3), sw = pick(rng, 1, 3);
    EXPECT_LE(max_abs_diff(max_pool(x, wh, ww, sh, sw).output, naive_pool(x, wh, ww, sh, sw)), 1e-12);
  }
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({1, 4, 4}, rng);
  EXPECT_LE(max_abs_diff(max_pool(x, 2, 2, 2, 2).output, naive_pool(x, 2, 2, 2, 2)), 1e-12);
  EXPECT_THROW(max_pool(x, 5, 1, 1, 1), hstf::Error);
}

TEST(Dense, IdentityAndZeroInput) {
  DenseLayer l = make_dense(3, 3);
  for (std::size_t i = 0; i < 3; ++i) l.weight.at(i, i) = 1.0;
  const Tensor x = Tensor::vector({0.3, -2.0, 5.0});
  EXPECT_EQ(dense_forward(x, l), x);

  DenseLayer s = make_dense(4, 2, Activation::Sigmoid);
  s.bias = Tensor::vector({0.0, 1.5});
  const Tensor y = dense_forward(Tensor({4}), s);
  EXPECT_EQ(y[0], 0.5);
  EXPECT_EQ(y[1], sigmoid(1.5));
  EXPECT_THROW(dense_forward(Tensor({5}), s), hstf::Error);
}

TEST(Dense, MatchesMatrixVectorOracleAndBatchesRowwise) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t in = pick(rng, 1, 9), out = pick(rng, 1, 9), batch = pick(rng, 1, 5);
    DenseLayer l = make_dense(in, out, random_activation(rng));
    l.weight = random_tensor(l.weight.shape(), rng);
    l.bias = random_tensor(l.bias.shape(), rng);
    const Tensor xb = random_tensor({batch, in}, rng);
    const Tensor yb = dense_forward(xb, l);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        double s = l.bias[o];
        for (std::size_t i = 0; i < in; ++i) s += l.weight.at(o, i) * xb.at(r, i);
        EXPECT_NEAR(yb.at(r, o), naive_act(l.activation, s), 1e-12);
      }
    }
  }
}


TEST(Lstm, ZeroWeightsHalveCellState) {
  const LstmCell cell = make_lstm(4, 3);
  LstmState s = zero_state(4);
  s.c = Tensor::vector({1.0, -2.0, 0.75, 3.0});
  const LstmState next = lstm_step(cell, s, Tensor::vector({5.0, -1.0, 2.0}));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(next.c[k], 0.5 * s.c[k]);
    EXPECT_EQ(next.h[k], 0.5 * std::tanh(0.5 * s.c[k]));
  }
}

TEST(Lstm, SaturatedForgetGateKeepsMemory) {
  LstmCell cell = make_lstm(2, 2);
  cell.b_f.fill(50.0);
  LstmState s = zero_state(2);
  s.c = Tensor::vector({0.7, -1.3});
  const LstmState next = lstm_step(cell, s, Tensor::vector({1.0, 2.0}));
  EXPECT_NEAR(next.c[0], 0.7, 1e-12);
  EXPECT_NEAR(next.c[1], -1.3, 1e-12);
}

TEST(Lstm, MatchesScalarImplementation) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t hs = seed == 0 ? 3 : pick(rng, 1, 6), is = pick(rng, 1, 6);
    LstmCell cell = make_lstm(hs, is);
    randomize(cell, rng);
    LstmState s{random_tensor({hs}, rng), random_tensor({hs}, rng)};
    const Tensor x = random_tensor({is}, rng);
    const LstmState next = lstm_step(cell, s, x);
    std::vector<double> c1, h1;
    scalar_lstm(cell, {s.c.values().begin(), s.c.values().end()}, {s.h.values().begin(), s.h.values().end()},
                {x.values().begin(), x.values().end()}, c1, h1);
    for (std::size_t k = 0; k < hs; ++k) {
      EXPECT_NEAR(next.c[k], c1[k], 1e-12);
      EXPECT_NEAR(next.h[k], h1[k], 1e-12);
    }
  }
}

TEST(Lstm, GateRangesStayOpen) {
  std::mt19937_64 rng(5);
  LstmCell cell = make_lstm(5, 4);
  randomize(cell, rng, 1.0);
  LstmStepCache cache;
  lstm_step(cell, zero_state(5, 3), random_tensor({3, 4}, rng, -3, 3), &cache);
  for (std::size_t k = 0; k < cache.i.size(); ++k) {
    for (double g : {cache.i[k], cache.f[k], cache.o[k]}) {
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 1.0);
    }
    EXPECT_GT(cache.c_tilde[k], -1.0);
    EXPECT_LT(cache.c_tilde[k], 1.0);
  }
  // Far from the origin double rounding reaches the limits exactly; never beyond.
  lstm_step(cell, zero_state(5, 3), random_tensor({3, 4}, rng, -1e6, 1e6), &cache);
  for (std::size_t k = 0; k < cache.i.size(); ++k) {
    for (double g : {cache.i[k], cache.f[k], cache.o[k]}) {
      EXPECT_GE(g, 0.0);
      EXPECT_LE(g, 1.0);
    }
    EXPECT_GE(cache.c_tilde[k], -1.0);
    EXPECT_LE(cache.c_tilde[k], 1.0);
  }
}

TEST(Lstm, RejectsMismatchedInput) {
  EXPECT_THROW(lstm_step(make_lstm(3, 2), zero_state(3), Tensor({4})), hstf::Error);
  EXPECT_THROW(lstm_step(make_lstm(3, 2), zero_state(2), Tensor({2})), hstf::Error);
}

// ---------------------------------------------------------------------------
// Gradients against central differences

namespace {

GradCheckOptions strict() {
  GradCheckOptions o;
  o.epsilon = 1e-5;
  o.tolerance = 1e-4;
  return o;
}

}  // namespace

TEST(Gradients, ConvLayerRandomShapes) {
  std::size_t skipped = 0, checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t c = pick(rng, 1, 3), k = pick(rng, 1, 3), kh = pick(rng, 1, 3), kw = pick(rng, 1, 3);
    ConvLayer l = make_conv(k, c, kh, kw, random_activation(rng));
    l.stride_h = pick(rng, 1, 2);
    l.stride_w = pick(rng, 1, 2);
    l.weight = random_tensor(l.weight.shape(), rng);
    l.bias = random_tensor(l.bias.shape(), rng);
    Tensor x = random_tensor({c, kh + pick(rng, 0, 4), kw + pick(rng, 0, 4)}, rng);
    const Tensor out0 = conv_forward(x, l);
    const Tensor r = random_tensor(out0.shape(), rng);
    ConvLayer g = zeros_like(l);
    const Tensor dx = conv_backward(x, out0, l, r, g, true);
    auto loss = [&] {
      const Tensor o = conv_forward(x, l);
      return Evaluation{dot(o, r), fold_relu_pattern(0, o)};
    };
    std::vector<ParamRef> refs = {{"w", &l.weight, &g.weight}, {"b", &l.bias, &g.bias}, {"x", &x, &dx}};
    const GradCheckReport rep = finite_diff_check(refs, loss, strict());
    EXPECT_TRUE(rep.passed) << "seed " << seed << " err " << rep.max_relative_error;
    skipped += rep.skipped_kinks;
    checked += rep.checked;
  }
  EXPECT_LT(skipped * 100, checked);
}

TEST(Gradients, MaxPoolRandomShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t wh = pick(rng, 1, 3), ww = pick(rng, 1, 3);
    Tensor x = random_tensor({pick(rng, 1, 2), wh + pick(rng, 0, 4), ww + pick(rng, 0, 4)}, rng);
    const std::size_t sh = pick(rng, 1, 2), sw = pick(rng, 1, 2);
    const PoolResult p = max_pool(x, wh, ww, sh, sw);
    const Tensor r = random_tensor(p.output.shape(), rng);
    const Tensor dx = max_pool_backward(p, r);
    auto loss = [&] {
      const PoolResult q = max_pool(x, wh, ww, sh, sw);
      std::uint64_t h = 0;
      for (auto a : q.argmax) h = h * 1000003 + a;
      return Evaluation{dot(q.output, r), h};
    };
    std::vector<ParamRef> refs = {{"x", &x, &dx}};
    EXPECT_TRUE(finite_diff_check(refs, loss, strict()).passed) << "seed " << seed;
  }
}

TEST(Gradients, DenseRandomShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t in = pick(rng, 1, 7), out = pick(rng, 1, 7), batch = pick(rng, 1, 4);
    DenseLayer l = make_dense(in, out, random_activation(rng));
    l.weight = random_tensor(l.weight.shape(), rng);
    l.bias = random_tensor(l.bias.shape(), rng);
    Tensor x = random_tensor({batch, in}, rng);
    const Tensor y = dense_forward(x, l);
    const Tensor r = random_tensor(y.shape(), rng);
    DenseLayer g = zeros_like(l);
    const Tensor dx = dense_backward(x, y, l, r, g, true);
    auto loss = [&] {
      const Tensor o = dense_forward(x, l);
      return Evaluation{dot(o, r), l.activation == Activation::Relu ? fold_relu_pattern(0, o) : 0};
    };
    std::vector<ParamRef> refs = {{"w", &l.weight, &g.weight}, {"b", &l.bias, &g.bias}, {"x", &x, &dx}};
    const auto rep = finite_diff_check(refs, loss, strict());
    EXPECT_TRUE(rep.passed) << "seed " << seed << " err " << rep.max_relative_error;
  }
}

TEST(Gradients, LstmUnrolledRandomShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t hs = pick(rng, 1, 5), is = pick(rng, 1, 5), batch = pick(rng, 1, 3), steps = pick(rng, 1, 4);
    LstmCell cell = make_lstm(hs, is);
    randomize(cell, rng);
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < steps; ++t) xs.push_back(random_tensor({batch, is}, rng));
    LstmState init{random_tensor({batch, hs}, rng), random_tensor({batch, hs}, rng)};
    const Tensor rh = random_tensor({batch, hs}, rng), rc = random_tensor({batch, hs}, rng);

    std::vector<LstmStepCache> caches(steps);
    LstmState s = init;
    for (std::size_t t = 0; t < steps; ++t) s = lstm_step(cell, s, xs[t], &caches[t]);
    LstmCell g = zeros_like(cell);
    std::vector<Tensor> dxs(steps);
    Tensor dh = rh, dc = rc;
    for (std::size_t t = steps; t-- > 0;) {
      LstmStepGrad sg = lstm_step_backward(cell, caches[t], dh, dc, g);
      dxs[t] = sg.x;
      dh = sg.h_prev;
      dc = sg.c_prev;
    }
    auto loss = [&] {
      LstmState st = init;
      for (std::size_t t = 0; t < steps; ++t) st = lstm_step(cell, st, xs[t]);
      return Evaluation{dot(st.h, rh) + dot(st.c, rc), 0};
    };
    std::vector<ParamRef> refs = {{"w_i", &cell.w_i, &g.w_i}, {"w_f", &cell.w_f, &g.w_f},
                                  {"w_c", &cell.w_c, &g.w_c}, {"w_o", &cell.w_o, &g.w_o},
                                  {"b_i", &cell.b_i, &g.b_i}, {"b_f", &cell.b_f, &g.b_f},
                                  {"b_c", &cell.b_c, &g.b_c}, {"b_o", &cell.b_o, &g.b_o},
                                  {"h0", &init.h, &dh},       {"c0", &init.c, &dc}};
    for (std::size_t t = 0; t < steps; ++t) refs.push_back({"x" + std::to_string(t), &xs[t], &dxs[t]});
    const auto rep = finite_diff_check(refs, loss, strict());
    EXPECT_TRUE(rep.passed) << "seed " << seed << " err " << rep.max_relative_error;
  }
}

TEST(Gradients, CompositeConvPoolDense) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    Sequential net;
    net.add(make_conv(2, 1, 2, 3, Activation::Relu));
    net.add(PoolSpec{2, 2, 2, 2});
    net.add(Flatten{});
    Tensor x = random_tensor({6, 9}, rng);
    const std::size_t flat = net.output_shape(x.shape())[0];
    net.add(make_dense(flat, 3, Activation::Tanh));
    for (auto& [name, t] : net.named_parameters("l")) *t = random_tensor(t->shape(), rng);
    Sequential::Tape tape;
    const Tensor y = net.forward(x, &tape);
    const Tensor r = random_tensor(y.shape(), rng);
    Sequential g = net.zeros_like();
    const Tensor dx = net.backward(tape, r, g, true);
    auto loss = [&] {
      Sequential::Tape t;
      const Tensor o = net.forward(x, &t);
      return Evaluation{dot(o, r), region_signature(net, t)};
    };
    std::vector<ParamRef> refs;
    auto np = net.named_parameters("net");
    auto gp = g.named_parameters("net");
    for (std::size_t i = 0; i < np.size(); ++i) refs.push_back({np[i].first, np[i].second, gp[i].second});
    refs.push_back({"x", &x, &dx});
    const auto rep = finite_diff_check(refs, loss, strict());
    EXPECT_TRUE(rep.passed) << "seed " << seed << " err " << rep.max_relative_error;
  }
}

TEST(Backward, DenseBiasGradientIsOne) {
  DenseLayer l = make_dense(2, 2);
  l.weight.at(0, 0) = l.weight.at(1, 1) = 1.0;
  const Tensor x = Tensor::vector({0.4, -0.2});
  const Tensor y = dense_forward(x, l);
  DenseLayer g = zeros_like(l);
  dense_backward(x, y, l, Tensor::vector({1.0, 0.0}), g);
  EXPECT_EQ(g.bias[0], 1.0);
  EXPECT_EQ(g.bias[1], 0.0);
}

TEST(Backward, ZeroInputGivesZeroConvWeightGradient) {
  std::mt19937_64 rng(2);
  Sequential net;
  ConvLayer c = make_conv(2, 1, 3, 3, Activation::Relu);
  c.weight = random_tensor(c.weight.shape(), rng);
  c.bias.fill(0.1);
  net.add(c);
  net.add(PoolSpec{});
  net.add(Flatten{});
  net.add(make_dense(2 * 2 * 2, 1));
  std::get<DenseLayer>(net.layers()[3]).weight.fill(0.3);
  Sequential::Tape tape;
  const Tensor y = net.forward(Tensor({6, 6}), &tape);
  Sequential g = net.zeros_like();
  net.backward(tape, Tensor(y.shape(), 1.0), g);
  for (double v : std::get<ConvLayer>(g.layers()[0]).weight.values()) EXPECT_EQ(v, 0.0);
  EXPECT_NE(std::get<ConvLayer>(g.layers()[0]).bias[0], 0.0);
}

TEST(GradCheck, IdentityAndConstantGraphs) {
  Tensor p = Tensor::vector({0.5, -1.0, 2.0});
  Tensor g(p.shape(), 1.0);  // d/dp of sum(p)
  std::vector<ParamRef> refs = {{"p", &p, &g}};
  auto sum = [&] { return Evaluation{p[0] + p[1] + p[2], 0}; };
  auto rep = finite_diff_check(refs, sum);
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_relative_error, 1e-9);

  Tensor zero(p.shape());
  std::vector<ParamRef> crefs = {{"p", &p, &zero}};
  rep = finite_diff_check(crefs, [] { return Evaluation{3.0, 0}; });
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.max_relative_error, 0.0);

  Tensor wrong(p.shape(), 2.0);
  std::vector<ParamRef> wrefs = {{"p", &p, &wrong}};
  EXPECT_FALSE(finite_diff_check(wrefs, sum).passed);
}

// ---------------------------------------------------------------------------
// Active-rectangle feature maps against dense ops

namespace {

FeatureMap random_map(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w) {
  FeatureMap m;
  m.channels = c;
  m.height = h;
  m.width = w;
  m.active_h = pick(rng, 0, h);
  m.active_w = m.active_h == 0 ? 0 : pick(rng, 1, w);
  if (m.active_h == 0) m.active_w = 0;
  if (m.active_h > 0) m.active = random_tensor({c, m.active_h, m.active_w}, rng);
  for (std::size_t i = 0; i < c; ++i) m.fill.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
  return m;
}

}  // namespace

TEST(FeatureMap, ConvAndPoolMatchDenseForwardAndBackward) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t c = pick(rng, 1, 3), h = pick(rng, 4, 12), w = pick(rng, 4, 12);
    const FeatureMap in = random_map(rng, c, h, w);
    const Tensor dense_in = in.dense();

    ConvLayer l = make_conv(pick(rng, 1, 3), c, pick(rng, 1, 3), pick(rng, 1, 3), random_activation(rng));
    l.stride_h = pick(rng, 1, 2);
    l.stride_w = pick(rng, 1, 2);
    l.weight = random_tensor(l.weight.shape(), rng);
    l.bias = random_tensor(l.bias.shape(), rng);
    MapCache cc;
    const FeatureMap out = conv_forward(in, l, &cc);
    const Tensor dense_out = hstf::nn::conv_forward(dense_in, l);
    ASSERT_LE(max_abs_diff(out.dense(), dense_out), 1e-12) << "seed " << seed;

    const Tensor r = random_tensor(dense_out.shape(), rng);
    ConvLayer g_sparse = zeros_like(l), g_dense = zeros_like(l);
    const FeatureMapGrad gin = conv_backward(in, out, cc, l, split_grad(r, out), g_sparse, true);
    const Tensor dx = hstf::nn::conv_backward(dense_in, dense_out, l, r, g_dense, true);
    EXPECT_LE(max_abs_diff(g_sparse.weight, g_dense.weight), 1e-10) << "seed " << seed;
    EXPECT_LE(max_abs_diff(g_sparse.bias, g_dense.bias), 1e-10) << "seed " << seed;
    const FeatureMapGrad expect = split_grad(dx, in);
    if (in.active_h > 0) {
      EXPECT_LE(max_abs_diff(gin.active, expect.active), 1e-10) << "seed " << seed;
    }
    for (std::size_t i = 0; i < c; ++i) EXPECT_NEAR(gin.fill[i], expect.fill[i], 1e-10) << "seed " << seed;

    const std::size_t ph = pick(rng, 1, 3), pw = pick(rng, 1, 3);
    if (ph > out.height || pw > out.width) continue;
    const PoolSpec ps{ph, pw, pick(rng, 1, 3), pick(rng, 1, 3)};
    MapCache pc;
    const FeatureMap pooled = pool_forward(out, ps, &pc);
    const PoolResult dense_pool = max_pool(dense_out, ps.window_h, ps.window_w, ps.stride_h, ps.stride_w);
    ASSERT_LE(max_abs_diff(pooled.dense(), dense_pool.output), 1e-12) << "seed " << seed;
    const Tensor rp = random_tensor(dense_pool.output.shape(), rng);
    const FeatureMapGrad gp = pool_backward(out, pooled, pc, split_grad(rp, pooled));
    const FeatureMapGrad ep = split_grad(max_pool_backward(dense_pool, rp), out);
    // Ties between the constant region and explicit cells can route gradient
    // to a different (equal-valued) cell; only check the totals then.
    double total_sparse = 0, total_dense = 0;
    for (double v : gp.fill) total_sparse += v;
    for (double v : ep.fill) total_dense += v;
    if (out.active_h > 0) {
      for (double v : gp.active.values()) total_sparse += v;
      for (double v : ep.active.values()) total_dense += v;
    }
    EXPECT_NEAR(total_sparse, total_dense, 1e-10) << "seed " << seed;
  }
}

TEST(FeatureMap, ImageFromDenseKeepsSmallestBlock) {
  Tensor img({5, 8});
  img.at(0, 1) = 0.2;
  img.at(2, 5) = 0.7;
  const FeatureMap m = image_map_from_dense(img);
  EXPECT_EQ(m.active_h, 3u);
  EXPECT_EQ(m.active_w, 6u);
  EXPECT_EQ(max_abs_diff(m.dense(), img.reshaped({1, 5, 8})), 0.0);
  const FeatureMap z = image_map_from_dense(Tensor({5, 8}));
  EXPECT_EQ(z.active_h, 0u);
  EXPECT_EQ(z.dense(), Tensor({1, 5, 8}));
}

// ---------------------------------------------------------------------------
// Optimizer

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  for (OptimizerKind kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
    Tensor p = Tensor::vector({1.0, -2.0});
    const Tensor before = p;
    Tensor g({2});
    Optimizer opt({kind, 0.1});
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&g};
    opt.step(ps, gs);
    EXPECT_EQ(p, before);
  }
}

TEST(Optimizer, SgdStepSubtractsGradient) {
  Tensor p = Tensor::vector({1.0, -2.0, 0.5});
  const Tensor g = Tensor::vector({0.25, -1.0, 3.0});
  Optimizer opt({OptimizerKind::Sgd, 1.0});
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  opt.step(ps, gs);
  EXPECT_EQ(p, Tensor::vector({0.75, -1.0, -2.5}));
}

TEST(Optimizer, AdamFirstStepMatchesHandFormula) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor p = Tensor::vector({0.3, -0.7});
  const Tensor g = Tensor::vector({2.0, -0.001});
  Optimizer opt({OptimizerKind::Adam, lr, b1, b2, eps});
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  opt.step(ps, gs);
  for (std::size_t i = 0; i < 2; ++i) {
    const double m = (1 - b1) * g[i], v = (1 - b2) * g[i] * g[i];
    const double mh = m / (1 - b1), vh = v / (1 - b2);
    const double expected = (i == 0 ? 0.3 : -0.7) - lr * mh / (std::sqrt(vh) + eps);
    EXPECT_NEAR(p[i], expected, 1e-15);
  }
}

TEST(Optimizer, ShapeMismatchThrows) {
  Tensor p({2});
  Tensor g({3});
  Optimizer opt;
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  EXPECT_THROW(opt.step(ps, gs), hstf::Error);
}

TEST(Optimizer, RepeatedRunsAreBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(11);
    DenseLayer l = make_dense(4, 3, Activation::Tanh);
    glorot_uniform(l.weight, 4, 3, rng);
    Optimizer opt;
    for (int step = 0; step < 20; ++step) {
      const Tensor x = random_tensor({5, 4}, rng);
      const Tensor y = dense_forward(x, l);
      DenseLayer g = zeros_like(l);
      dense_backward(x, y, l, y, g, false);
      Tensor* ps[] = {&l.weight, &l.bias};
      const Tensor* gs[] = {&g.weight, &g.bias};
      opt.step(ps, gs);
    }
    return l.weight;
  };
  EXPECT_EQ(run(), run());
}

TEST(Loss, BceWithLogitIsStable) {
  EXPECT_NEAR(bce_with_logit(0.0, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logit(800.0, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(bce_with_logit(-800.0, 1.0), 800.0, 1e-9);
  EXPECT_NEAR(bce_with_logit(2.0, 0.0), -std::log(1 - sigmoid(2.0)), 1e-12);
  EXPECT_NEAR(bce_with_logit_grad(2.0, 1.0), sigmoid(2.0) - 1.0, 1e-15);
}
