#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hstf/error.hpp"
#include "hstf/model.hpp"
#include "test_support.hpp"

using namespace hstf;
using namespace hstf::model;
using hstf::testing::random_flow_input;
using hstf::testing::tiny_config;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hstf_model_test_" + name)).string();
}

HstfConfig small_default_geometry() {
  HstfConfig c;
  c.conv = parse_conv_stages("2x3x7,3x3x5");
  c.cnn_dense = 16;
  c.lstm_hidden = 16;
  c.head_layers = {8};
  return c;
}

http::Flow sample_flow(bool malicious) {
  http::Flow f;
  f.flow_id = "10.0.0.1:40000-10.0.0.2:80#0";
  f.label = malicious ? http::Label::Malicious : http::Label::Benign;
  http::HttpMessage req;
  req.method = malicious ? "POST" : "GET";
  req.url = malicious ? "/gate.php?id=" + std::string(120, 'a') : "/index.html";
  req.headers = {{"Host", "example.test", {}}, {"User-Agent", "test", {}}};
  req.src_port = 40000;
  req.dst_port = 80;
  req.ttl = 64;
  req.wire_length = http::serialize(req).size();
  http::HttpMessage resp;
  resp.kind = http::MessageKind::Response;
  resp.status_code = 200;
  resp.reason = "OK";
  resp.body = {'o', 'k'};
  resp.body_length = 2;
  resp.headers = {{"Content-Length", "2", {}}};
  resp.src_port = 80;
  resp.dst_port = 40000;
  resp.ttl = 56;
  resp.timestamp = 0.05;
  resp.wire_length = http::serialize(resp).size();
  f.messages = {req, resp};
  return f;
}

}  // namespace

TEST(ModelShape, DefaultChainWidths) {
  const HstfModel m{HstfConfig{}};
  EXPECT_EQ(m.cnn_flat_width(), 64u * 10 * 46);
  EXPECT_EQ(m.params.lstm.input_size(), 133u);
  EXPECT_EQ(m.params.lstm.hidden_size(), 128u);
  EXPECT_EQ(m.params.head.front().inputs(), 158u);
  EXPECT_EQ(m.params.head.back().outputs(), 1u);
  EXPECT_EQ(m.params.pl_encoder.outputs(), 20u);
  EXPECT_EQ(m.params.pl_dense.outputs(), 5u);
  EXPECT_EQ(m.params.fl_encoder.outputs(), 30u);
}

TEST(ModelShape, PacketBranchWidthIsAlways133) {
  const HstfModel m(small_default_geometry());
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    PacketInput p;
    p.pl.assign(100, 0.0);
    if (i > 0) {
      p.block = nn::Tensor({static_cast<std::size_t>(i * 9), 150}, 0.3);
      p.pl[3] = 0.5;
    }
    EXPECT_EQ(packet_branch(m, p).shape(), nn::Shape({16 + 5}));
  }
  HstfConfig full;
  full.conv = parse_conv_stages("1x3x7,1x3x5");
  const HstfModel d(full);
  PacketInput p;
  p.pl.assign(100, 0.1);
  p.block = nn::Tensor({3, 40}, 0.9);
  EXPECT_EQ(packet_branch(d, p).size(), 133u);
}

TEST(ModelShape, RejectsStagesThatDoNotFit) {
  HstfConfig c = tiny_config(1);
  c.conv = parse_conv_stages("2x9x3");
  EXPECT_THROW(HstfModel{c}, Error);
  c = HstfConfig{};
  c.flow_size = 51;
  EXPECT_THROW(HstfModel{c}, Error);
}

TEST(ModelForward, ZeroInputsAndZeroBiasesScoreOneHalf) {
  const HstfModel m(small_default_geometry());
  FlowInput f;
  f.fl.assign(170, 0.0);
  f.packets.resize(4, PacketInput{{}, std::vector<double>(100, 0.0)});
  EXPECT_EQ(flow_forward(m, f), 0.5);
}

TEST(ModelForward, PadsAsEmptyBlocksEqualExplicitZeroMatrices) {
  const HstfConfig cfg = tiny_config(3);
  const HstfModel m(cfg);
  std::mt19937_64 rng(8);
  FlowInput a = random_flow_input(cfg, rng);
  a.packets[1] = PacketInput{{}, std::vector<double>(100, 0.0)};
  FlowInput b = a;
  b.packets[1].block = nn::Tensor({cfg.matrix_rows, cfg.matrix_cols});
  EXPECT_EQ(flow_forward(m, a), flow_forward(m, b));
}

TEST(ModelForward, EqualsCompositionOfLayerOperations) {
  const HstfConfig cfg = tiny_config(5);
  const HstfModel m(cfg);
  std::mt19937_64 rng(6);
  const FlowInput f = random_flow_input(cfg, rng);

  // Recompose by hand from dense nn ops: CNN per slot, PL encoder, LSTM, FL encoder, head.
  nn::LstmState state = nn::zero_state(cfg.lstm_hidden);
  for (const auto& p : f.packets) {
    nn::Tensor x({cfg.matrix_rows, cfg.matrix_cols});
    for (std::size_t r = 0; !p.block.empty() && r < p.block.dim(0); ++r)
      for (std::size_t c = 0; c < p.block.dim(1); ++c) x.at(r, c) = p.block.at(r, c);
    nn::Tensor a = x.reshaped({1, cfg.matrix_rows, cfg.matrix_cols});
    for (std::size_t s = 0; s < cfg.conv.size(); ++s) {
      a = nn::conv_forward(a, m.params.conv[s]);
      a = nn::max_pool(a, cfg.conv[s].pool_h, cfg.conv[s].pool_w, cfg.conv[s].pool_h, cfg.conv[s].pool_w).output;
    }
    const nn::Tensor cnn = nn::dense_forward(a.reshaped({a.size()}), m.params.cnn_dense);
    const nn::Tensor pl = nn::dense_forward(nn::dense_forward(nn::Tensor({100}, p.pl), m.params.pl_encoder),
                                            m.params.pl_dense);
    nn::Tensor emb({cfg.embedding_width()});
    for (std::size_t k = 0; k < cfg.cnn_dense; ++k) emb[k] = cnn[k];
    for (std::size_t k = 0; k < cfg.pl_dense; ++k) emb[cfg.cnn_dense + k] = pl[k];
    EXPECT_LE(nn::max_abs_diff(emb, packet_branch(m, p)), 1e-12);
    state = nn::lstm_step(m.params.lstm, state, emb);
  }
  const nn::Tensor fl = nn::dense_forward(nn::Tensor({170}, f.fl), m.params.fl_encoder);
  nn::Tensor h({cfg.head_input_width()});
  for (std::size_t k = 0; k < cfg.lstm_hidden; ++k) h[k] = state.h[k];
  for (std::size_t k = 0; k < cfg.fl_encoder_out; ++k) h[cfg.lstm_hidden + k] = fl[k];
  for (const auto& layer : m.params.head) h = nn::dense_forward(h, layer);
  EXPECT_NEAR(flow_forward(m, f), nn::sigmoid(h[0]), 1e-12);
}

TEST(ModelForward, DeterministicAndBounded) {
  const HstfConfig cfg = tiny_config(9);
  const HstfModel a(cfg), b(cfg);
  EXPECT_EQ(a.params, b.params);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const FlowInput f = random_flow_input(cfg, rng);
    const double s = flow_forward(a, f);
    EXPECT_EQ(s, flow_forward(b, f));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  FlowInput bad = random_flow_input(cfg, rng);
  bad.packets.pop_back();
  EXPECT_THROW(flow_forward(a, bad), Error);
}

TEST(ModelForward, ZeroGateNeverReadsStatistics) {
  HstfConfig cfg = tiny_config(2);
  cfg.statistics_gate = 0.0;
  const HstfModel m(cfg);
  std::mt19937_64 rng(3);
  FlowInput f = random_flow_input(cfg, rng);
  const double s = flow_forward(m, f);
  for (auto& p : f.packets) std::fill(p.pl.begin(), p.pl.end(), 123.0);
  std::fill(f.fl.begin(), f.fl.end(), -7.0);
  EXPECT_EQ(flow_forward(m, f), s);
  EXPECT_EQ(m.statistics_reads(), 0u);

  cfg.statistics_gate = 1.0;
  const HstfModel on(cfg);
  flow_forward(on, f);
  EXPECT_GT(on.statistics_reads(), 0u);
}

TEST(ModelGradients, TinyConfigMatchesFiniteDifferences) {
  std::size_t skipped = 0, checked = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    HstfModel m(tiny_config(seed));
    std::mt19937_64 rng(seed * 7919);
    std::vector<FlowInput> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_flow_input(m.config(), rng));
    const nn::GradCheckReport rep = gradient_check(m, batch);
    EXPECT_TRUE(rep.passed) << "seed " << seed << " max rel err " << rep.max_relative_error;
    skipped += rep.skipped_kinks;
    checked += rep.checked;
  }
  EXPECT_LT(skipped * 100, checked);
}

TEST(ModelPersistence, RoundTripIsExact) {
  HstfModel m(tiny_config(4));
  m.stats.pl_min[3] = 1.5;
  m.stats.fl_max[10] = 1e-300;
  m.stats.flows_observed = 12;
  const std::string path = temp_path("roundtrip.bin");
  save_model(m, path);
  const HstfModel loaded = load_model(path);
  EXPECT_EQ(loaded.config(), m.config());
  EXPECT_EQ(loaded.params, m.params);
  EXPECT_EQ(loaded.stats, m.stats);
  std::mt19937_64 rng(2);
  const FlowInput f = random_flow_input(m.config(), rng);
  EXPECT_EQ(flow_forward(loaded, f), flow_forward(m, f));
  std::filesystem::remove(path);
}

TEST(ModelPersistence, DetectsCorruption) {
  const HstfModel m(tiny_config(4));
  const std::string path = temp_path("corrupt.bin");
  save_model(m, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::vector<char>& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto code_of = [&] {
    try {
      load_model(path);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  write(std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)));
  EXPECT_EQ(code_of(), Errc::CorruptFile);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  write(flipped);
  EXPECT_EQ(code_of(), Errc::CorruptFile);
  auto versioned = bytes;
  versioned[8] = 9;
  write(versioned);
  EXPECT_EQ(code_of(), Errc::VersionMismatch);
  write({'n', 'o', 'p', 'e'});
  EXPECT_EQ(code_of(), Errc::CorruptFile);
  std::filesystem::remove(path);
  EXPECT_EQ(code_of(), Errc::Io);
}

TEST(ModelConfig, JsonRoundTripAndOverrides) {
  HstfConfig c = tiny_config(77);
  c.learning_rate = 0.0123456789;
  c.optimizer = nn::OptimizerKind::Sgd;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  const HstfConfig o = config_from_json(R"({"flow_size": 8, "conv": "4x3x7,8x3x5/2x2"})");
  EXPECT_EQ(o.flow_size, 8u);
  EXPECT_EQ(o.conv, (std::vector<ConvStage>{{4, 3, 7, 2, 2}, {8, 3, 5, 2, 2}}));
  EXPECT_EQ(o.packet_size, 400u);
  EXPECT_THROW(config_from_json(R"({"flow_sise": 8})"), Error);
  EXPECT_THROW(config_from_json(R"({"flow_size": 0})"), Error);
  EXPECT_THROW(parse_conv_stages("4x3"), Error);
  EXPECT_EQ(format_conv_stages(parse_conv_stages("4x3x7/1x2")), "4x3x7/1x2");
}

namespace {

// Separable set: malicious flows carry wide first rows and a high PL/FL marker.
std::vector<FlowInput> separable_set(const HstfConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FlowInput> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool mal = i % 2 == 0;
    FlowInput f;
    f.target = mal ? 1.0 : 0.0;
    f.fl.assign(170, 0.0);
    f.fl[0] = mal ? 0.8 + 0.2 * u(rng) : 0.2 * u(rng);
    for (std::size_t s = 0; s < cfg.flow_size; ++s) {
      PacketInput p;
      p.pl.assign(100, 0.0);
      p.pl[3] = mal ? 0.7 + 0.3 * u(rng) : 0.3 * u(rng);
      const std::size_t w = mal ? cfg.matrix_cols : 3;
      p.block = nn::Tensor({2, w});
      for (double& v : p.block.values()) v = 0.2 + 0.6 * u(rng);
      f.packets.push_back(std::move(p));
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

TEST(ModelTraining, LossDecreasesOnSeparableData) {
  HstfConfig cfg = tiny_config(12);
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  HstfModel m(cfg);
  const auto data = separable_set(cfg, 64, 1);
  const TrainHistory h = train_inputs(m, data);
  ASSERT_EQ(h.epochs.size(), 3u);
  EXPECT_LT(h.epochs[1].train_loss, h.epochs[0].train_loss);
  EXPECT_LT(h.epochs[2].train_loss, h.epochs[1].train_loss);
}

TEST(ModelTraining, ZeroEpochsReturnsInitialization) {
  HstfConfig cfg = tiny_config(12);
  cfg.epochs = 0;
  HstfModel m(cfg);
  const HstfModel init(cfg);
  const TrainHistory h = train_inputs(m, separable_set(cfg, 10, 1));
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_EQ(m.params, init.params);
}

TEST(ModelTraining, SameSeedSameHistory) {
  HstfConfig cfg = tiny_config(21);
  cfg.epochs = 2;
  cfg.batch_size = 5;
  const auto data = separable_set(cfg, 20, 2);
  HstfModel a(cfg), b(cfg);
  const TrainHistory ha = train_inputs(a, data, data);
  const TrainHistory hb = train_inputs(b, data, data);
  ASSERT_EQ(ha.epochs.size(), hb.epochs.size());
  for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
    EXPECT_EQ(ha.epochs[i].train_loss, hb.epochs[i].train_loss);
    EXPECT_EQ(ha.epochs[i].validation, hb.epochs[i].validation);
  }
  EXPECT_EQ(a.params, b.params);
}

TEST(ModelTraining, SingleClassRejected) {
  HstfConfig cfg = tiny_config(1);
  HstfModel m(cfg);
  auto data = separable_set(cfg, 6, 1);
  for (auto& f : data) f.target = 0.0;
  try {
    train_inputs(m, data);
    FAIL() << "expected SingleClassDataset";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingleClassDataset);
  }
}

TEST(ModelPredict, ThresholdsAndEncodingPath) {
  HstfConfig cfg = small_default_geometry();
  cfg.epochs = 2;
  cfg.batch_size = 4;
  std::vector<features::EncodedFlow> enc;
  for (int i = 0; i < 12; ++i) enc.push_back(features::encode_flow(sample_flow(i % 2 == 0), 400, 4));
  const TrainResult r = train(enc, cfg);
  const http::Flow f = sample_flow(true);
  const Prediction p = predict(f, r.model);
  EXPECT_GE(p.score, 0.0);
  EXPECT_LE(p.score, 1.0);
  EXPECT_EQ(predict(f, r.model, 0.0).label, http::Label::Malicious);
  EXPECT_EQ(predict(f, r.model, 1.0 + 1e-9).label, http::Label::Benign);
  // Monotone: raising the threshold never flips Benign to Malicious.
  bool seen_benign = false;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const bool mal = predict(f, r.model, t).label == http::Label::Malicious;
    if (seen_benign) {
      EXPECT_FALSE(mal);
    }
    seen_benign = seen_benign || !mal;
  }
  http::Flow empty;
  EXPECT_THROW(predict(empty, r.model), Error);

  std::vector<features::EncodedFlow> one_class(enc.begin(), enc.begin() + 1);
  EXPECT_THROW(train(one_class, cfg), Error);
}
