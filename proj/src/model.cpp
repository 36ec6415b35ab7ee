#include "hstf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hstf/error.hpp"
#include "hstf/nn/sequential.hpp"
#include "json.hpp"

namespace hstf::model {
namespace {

using nn::Tensor;
using Json = nlohmann::json;

std::size_t parse_size(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  if (text.empty()) throw Error(Errc::InvalidArgument, "empty " + std::string(what));
  for (char c : text) {
    if (c < '0' || c > '9') throw Error(Errc::InvalidArgument, "bad " + std::string(what) + " '" + std::string(text) + "'");
    value = value * 10 + static_cast<std::size_t>(c - '0');
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double target_of(http::Label label) { return label == http::Label::Malicious ? 1.0 : 0.0; }

}  // namespace

std::vector<ConvStage> parse_conv_stages(std::string_view text) {
  std::vector<ConvStage> stages;
  if (text.empty() || text == "none") return stages;
  for (std::string_view part : split(text, ',')) {
    ConvStage s;
    const auto halves = split(part, '/');
    if (halves.size() > 2) throw Error(Errc::InvalidArgument, "bad conv stage '" + std::string(part) + "'");
    const auto k = split(halves[0], 'x');
    if (k.size() != 3) throw Error(Errc::InvalidArgument, "conv stage needs KxHxW, got '" + std::string(part) + "'");
    s.kernels = parse_size(k[0], "kernel count");
    s.kernel_h = parse_size(k[1], "kernel height");
    s.kernel_w = parse_size(k[2], "kernel width");
    if (halves.size() == 2) {
      const auto p = split(halves[1], 'x');
      if (p.size() != 2) throw Error(Errc::InvalidArgument, "pool needs HxW, got '" + std::string(part) + "'");
      s.pool_h = parse_size(p[0], "pool height");
      s.pool_w = parse_size(p[1], "pool width");
    }
    stages.push_back(s);
  }
  return stages;
}

std::string format_conv_stages(std::span<const ConvStage> stages) {
  if (stages.empty()) return "none";
  std::string out;
  for (const auto& s : stages) {
    if (!out.empty()) out += ",";
    out += std::to_string(s.kernels) + "x" + std::to_string(s.kernel_h) + "x" + std::to_string(s.kernel_w) + "/" +
           std::to_string(s.pool_h) + "x" + std::to_string(s.pool_w);
  }
  return out;
}

void HstfConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidArgument, msg); };
  if (packet_size < 1) fail("packet_size must be at least 1");
  if (flow_size < 1 || flow_size > features::kMaxFlowPackets) fail("flow_size must be within 1..50");
  if (matrix_rows < 1 || matrix_cols < 1) fail("matrix dimensions must be at least 1");
  for (const auto& s : conv) {
    if (s.kernels < 1 || s.kernel_h < 1 || s.kernel_w < 1 || s.pool_h < 1 || s.pool_w < 1) {
      fail("conv stage dimensions must be at least 1");
    }
  }
  if (cnn_dense < 1 || pl_encoder_out < 1 || pl_dense < 1 || lstm_hidden < 1 || fl_encoder_out < 1) {
    fail("layer widths must be at least 1");
  }
  for (std::size_t w : head_layers) {
    if (w < 1) fail("head layer widths must be at least 1");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(statistics_gate >= 0.0) || !std::isfinite(statistics_gate)) fail("statistics_gate must be >= 0");
  if (!(early_stop_f1 >= 0.0 && early_stop_f1 <= 1.0)) fail("early_stop_f1 must lie in [0,1]");
}

std::string config_to_json(const HstfConfig& c) {
  Json conv = Json::array();
  for (const auto& s : c.conv) {
    conv.push_back({{"kernels", s.kernels},
                    {"kernel_h", s.kernel_h},
                    {"kernel_w", s.kernel_w},
                    {"pool_h", s.pool_h},
                    {"pool_w", s.pool_w}});
  }
  Json j = {{"packet_size", c.packet_size},
            {"flow_size", c.flow_size},
            {"matrix_rows", c.matrix_rows},
            {"matrix_cols", c.matrix_cols},
            {"conv", conv},
            {"cnn_dense", c.cnn_dense},
            {"pl_encoder_out", c.pl_encoder_out},
            {"pl_dense", c.pl_dense},
            {"lstm_hidden", c.lstm_hidden},
            {"fl_encoder_out", c.fl_encoder_out},
            {"head_layers", c.head_layers},
            {"optimizer", std::string(nn::to_string(c.optimizer))},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"statistics_gate", c.statistics_gate},
            {"early_stop_f1", c.early_stop_f1}};
  return j.dump();
}

HstfConfig config_from_json(std::string_view text, const HstfConfig& base) {
  HstfConfig c = base;
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "packet_size") c.packet_size = value.get<std::size_t>();
      else if (key == "flow_size") c.flow_size = value.get<std::size_t>();
      else if (key == "matrix_rows") c.matrix_rows = value.get<std::size_t>();
      else if (key == "matrix_cols") c.matrix_cols = value.get<std::size_t>();
      else if (key == "conv") {
        if (value.is_string()) {
          c.conv = parse_conv_stages(value.get<std::string>());
        } else {
          c.conv.clear();
          for (const auto& s : value) {
            ConvStage st;
            st.kernels = s.at("kernels").get<std::size_t>();
            st.kernel_h = s.at("kernel_h").get<std::size_t>();
            st.kernel_w = s.at("kernel_w").get<std::size_t>();
            st.pool_h = s.value("pool_h", std::size_t{2});
            st.pool_w = s.value("pool_w", std::size_t{2});
            c.conv.push_back(st);
          }
        }
      } else if (key == "cnn_dense") c.cnn_dense = value.get<std::size_t>();
      else if (key == "pl_encoder_out") c.pl_encoder_out = value.get<std::size_t>();
      else if (key == "pl_dense") c.pl_dense = value.get<std::size_t>();
      else if (key == "lstm_hidden") c.lstm_hidden = value.get<std::size_t>();
      else if (key == "fl_encoder_out") c.fl_encoder_out = value.get<std::size_t>();
      else if (key == "head_layers") c.head_layers = value.get<std::vector<std::size_t>>();
      else if (key == "optimizer") c.optimizer = nn::parse_optimizer(value.get<std::string>());
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "statistics_gate") c.statistics_gate = value.get<double>();
      else if (key == "early_stop_f1") c.early_stop_f1 = value.get<double>();
      else throw Error(Errc::InvalidArgument, "unknown config key '" + key + "'");
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<std::pair<std::string, Tensor*>> HstfParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto dense = [&](const std::string& name, nn::DenseLayer& d) {
    out.emplace_back(name + ".weight", &d.weight);
    out.emplace_back(name + ".bias", &d.bias);
  };
  for (std::size_t i = 0; i < conv.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".weight", &conv[i].weight);
    out.emplace_back("conv" + std::to_string(i) + ".bias", &conv[i].bias);
  }
  dense("cnn_dense", cnn_dense);
  dense("pl_encoder", pl_encoder);
  dense("pl_dense", pl_dense);
  out.emplace_back("lstm.w_i", &lstm.w_i);
  out.emplace_back("lstm.w_f", &lstm.w_f);
  out.emplace_back("lstm.w_c", &lstm.w_c);
  out.emplace_back("lstm.w_o", &lstm.w_o);
  out.emplace_back("lstm.b_i", &lstm.b_i);
  out.emplace_back("lstm.b_f", &lstm.b_f);
  out.emplace_back("lstm.b_c", &lstm.b_c);
  out.emplace_back("lstm.b_o", &lstm.b_o);
  dense("fl_encoder", fl_encoder);
  for (std::size_t i = 0; i < head.size(); ++i) dense("head" + std::to_string(i), head[i]);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> HstfParams::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<HstfParams*>(this)->named_tensors()) out.emplace_back(name, t);
  return out;
}

HstfParams HstfParams::zeros_like() const {
  HstfParams z = *this;
  for (auto& [name, t] : z.named_tensors()) t->fill(0.0);
  return z;
}

HstfModel::HstfModel(HstfConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t channels = 1, h = config_.matrix_rows, w = config_.matrix_cols;
  for (const auto& s : config_.conv) {
    try {
      h = nn::conv_output_dim(h, s.kernel_h, 1);
      w = nn::conv_output_dim(w, s.kernel_w, 1);
      h = nn::conv_output_dim(h, s.pool_h, s.pool_h);
      w = nn::conv_output_dim(w, s.pool_w, s.pool_w);
    } catch (const Error&) {
      throw Error(Errc::InvalidArgument, "conv stages " + format_conv_stages(config_.conv) + " do not fit a " +
                                             std::to_string(config_.matrix_rows) + "x" +
                                             std::to_string(config_.matrix_cols) + " matrix");
    }
    params.conv.push_back(nn::make_conv(s.kernels, channels, s.kernel_h, s.kernel_w, nn::Activation::Relu));
    pools_.push_back(nn::PoolSpec{s.pool_h, s.pool_w, s.pool_h, s.pool_w});
    channels = s.kernels;
  }
  cnn_flat_width_ = channels * h * w;

  using nn::Activation;
  params.cnn_dense = nn::make_dense(cnn_flat_width_, config_.cnn_dense, Activation::Relu);
  params.pl_encoder = nn::make_dense(features::kPlSize, config_.pl_encoder_out, Activation::Relu);
  params.pl_dense = nn::make_dense(config_.pl_encoder_out, config_.pl_dense, Activation::Relu);
  params.lstm = nn::make_lstm(config_.lstm_hidden, config_.embedding_width());
  params.fl_encoder = nn::make_dense(features::kFlSize, config_.fl_encoder_out, Activation::Relu);
  std::size_t width = config_.head_input_width();
  for (std::size_t units : config_.head_layers) {
    params.head.push_back(nn::make_dense(width, units, Activation::Relu));
    width = units;
  }
  params.head.push_back(nn::make_dense(width, 1, Activation::Identity));

  // Width chain: embedding feeds the LSTM, LSTM state plus FL code feeds the head.
  if (params.lstm.input_size() != params.cnn_dense.outputs() + params.pl_dense.outputs() ||
      params.head.front().inputs() != params.lstm.hidden_size() + params.fl_encoder.outputs()) {
    throw Error(Errc::ShapeMismatch, "layer widths do not chain");
  }

  std::mt19937_64 rng(config_.seed);
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    auto& c = params.conv[i];
    const std::size_t area = c.kernel_h() * c.kernel_w();
    nn::glorot_uniform(c.weight, c.channels() * area, c.kernels() * area, rng);
  }
  auto init_dense = [&](nn::DenseLayer& d) { nn::glorot_uniform(d.weight, d.inputs(), d.outputs(), rng); };
  init_dense(params.cnn_dense);
  init_dense(params.pl_encoder);
  init_dense(params.pl_dense);
  const std::size_t lstm_fan_in = params.lstm.hidden_size() + params.lstm.input_size();
  for (Tensor* g : {&params.lstm.w_i, &params.lstm.w_f, &params.lstm.w_c, &params.lstm.w_o}) {
    nn::glorot_uniform(*g, lstm_fan_in, params.lstm.hidden_size(), rng);
  }
  init_dense(params.fl_encoder);
  for (auto& d : params.head) init_dense(d);
}

// ---------------------------------------------------------------------------
// Inputs

PacketInput make_packet_input(const Tensor& image, std::vector<double> pl) {
  PacketInput p;
  p.pl = std::move(pl);
  const nn::FeatureMap m = nn::image_map_from_dense(image);
  if (m.active_h > 0) p.block = m.active.reshaped({m.active_h, m.active_w});
  return p;
}

FlowInput make_flow_input(const features::EncodedFlow& encoded, const HstfModel& model) {
  const HstfConfig& cfg = model.config();
  if (encoded.matrices.size() != cfg.flow_size || encoded.pls.size() != cfg.flow_size) {
    throw Error(Errc::ConfigMismatch, "encoded flow has " + std::to_string(encoded.matrices.size()) +
                                          " packet slots, model expects " + std::to_string(cfg.flow_size));
  }
  if (cfg.matrix_rows != features::kRawRows || cfg.matrix_cols != features::kRawCols) {
    throw Error(Errc::ConfigMismatch, "model matrix shape differs from the 47x200 encoder output");
  }
  const features::EncodedFlow norm = features::normalize_features(encoded, model.stats);
  FlowInput in;
  in.target = target_of(encoded.label);
  in.fl.assign(norm.fl.begin(), norm.fl.end());
  in.packets.resize(cfg.flow_size);
  for (std::size_t p = 0; p < cfg.flow_size; ++p) {
    const auto& m = norm.matrices[p];
    std::size_t ah = 0, aw = 0;
    for (std::size_t r = 0; r < features::kRawRows; ++r) {
      for (std::size_t c = features::kRawCols; c > 0; --c) {
        if (m.byte_at(r, c - 1) != 0) {
          ah = r + 1;
          aw = std::max(aw, c);
          break;
        }
      }
    }
    PacketInput& pi = in.packets[p];
    pi.pl.assign(norm.pls[p].begin(), norm.pls[p].end());
    if (ah > 0) {
      pi.block = Tensor({ah, aw});
      for (std::size_t r = 0; r < ah; ++r) {
        for (std::size_t c = 0; c < aw; ++c) pi.block.at(r, c) = m.at(r, c);
      }
    }
  }
  return in;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct PacketTrace {
  std::vector<nn::FeatureMap> maps;  // input, then the output of each conv and pool layer
  std::vector<nn::MapCache> caches;
};

struct BatchTrace {
  std::size_t batch = 0;
  std::size_t steps = 0;
  bool statistics = false;
  std::vector<PacketTrace> packets;  // batch * steps, flow-major
  Tensor flat;                       // [N, cnn_flat_width]
  Tensor cnn_out;                    // [N, cnn_dense]
  Tensor pl_in, pl_hidden, pl_out;   // [N, 100], [N, pl_encoder_out], [N, pl_dense]
  std::vector<nn::LstmStepCache> lstm;
  Tensor fl_in, fl_out;  // [B, 170], [B, fl_encoder_out]
  Tensor head_in;        // [B, lstm_hidden + fl_encoder_out]
  std::vector<Tensor> head_out;
};

void check_input(const HstfConfig& cfg, const FlowInput& f) {
  if (f.packets.size() != cfg.flow_size) {
    throw Error(Errc::ConfigMismatch, "flow has " + std::to_string(f.packets.size()) + " packet slots, model expects " +
                                          std::to_string(cfg.flow_size));
  }
  if (f.fl.size() != features::kFlSize) throw Error(Errc::ConfigMismatch, "FL vector must have 170 entries");
  for (const auto& p : f.packets) {
    if (p.pl.size() != features::kPlSize) throw Error(Errc::ConfigMismatch, "PL vector must have 100 entries");
    if (!p.block.empty() && (p.block.rank() != 2 || p.block.dim(0) > cfg.matrix_rows ||
                             p.block.dim(1) > cfg.matrix_cols)) {
      throw Error(Errc::ConfigMismatch, "packet matrix block " + nn::shape_string(p.block.shape()) +
                                            " exceeds the model's " + std::to_string(cfg.matrix_rows) + "x" +
                                            std::to_string(cfg.matrix_cols));
    }
  }
}

void run_cnn(const HstfModel& model, const PacketInput& p, PacketTrace& trace, double* flat_row) {
  const HstfConfig& cfg = model.config();
  trace.maps.clear();
  trace.caches.clear();
  const std::size_t layers = 2 * model.params.conv.size();
  trace.maps.reserve(layers + 1);
  trace.caches.resize(layers);
  trace.maps.push_back(nn::image_map(p.block, cfg.matrix_rows, cfg.matrix_cols));
  for (std::size_t s = 0; s < model.params.conv.size(); ++s) {
    trace.maps.push_back(nn::conv_forward(trace.maps.back(), model.params.conv[s], &trace.caches[2 * s]));
    trace.maps.push_back(nn::pool_forward(trace.maps.back(), model.pools()[s], &trace.caches[2 * s + 1]));
  }
  trace.maps.back().dense_into(flat_row);
}

BatchTrace forward_batch(const HstfModel& model, std::span<const FlowInput* const> batch) {
  const HstfConfig& cfg = model.config();
  const HstfParams& P = model.params;
  BatchTrace t;
  t.batch = batch.size();
  t.steps = cfg.flow_size;
  t.statistics = cfg.statistics_gate != 0.0;
  const std::size_t n = t.batch * t.steps;
  const std::size_t flat_w = model.cnn_flat_width();
  const double gate = cfg.statistics_gate;
  for (const FlowInput* f : batch) check_input(cfg, *f);

  t.packets.resize(n);
  t.flat = Tensor({n, flat_w});
  for (std::size_t b = 0; b < t.batch; ++b) {
    for (std::size_t s = 0; s < t.steps; ++s) {
      const std::size_t row = b * t.steps + s;
      run_cnn(model, batch[b]->packets[s], t.packets[row], t.flat.data() + row * flat_w);
    }
  }
  t.cnn_out = nn::dense_forward(t.flat, P.cnn_dense);

  if (t.statistics) {
    model.note_statistics_read();
    t.pl_in = Tensor({n, features::kPlSize});
    t.fl_in = Tensor({t.batch, features::kFlSize});
    for (std::size_t b = 0; b < t.batch; ++b) {
      for (std::size_t s = 0; s < t.steps; ++s) {
        const auto& pl = batch[b]->packets[s].pl;
        std::copy(pl.begin(), pl.end(), t.pl_in.data() + (b * t.steps + s) * features::kPlSize);
      }
      std::copy(batch[b]->fl.begin(), batch[b]->fl.end(), t.fl_in.data() + b * features::kFlSize);
    }
    t.pl_hidden = nn::dense_forward(t.pl_in, P.pl_encoder);
    t.pl_out = nn::dense_forward(t.pl_hidden, P.pl_dense);
    t.fl_out = nn::dense_forward(t.fl_in, P.fl_encoder);
  }

  const std::size_t cd = cfg.cnn_dense, pd = cfg.pl_dense, emb = cfg.embedding_width();
  nn::LstmState state = nn::zero_state(cfg.lstm_hidden, t.batch);
  t.lstm.resize(t.steps);
  for (std::size_t s = 0; s < t.steps; ++s) {
    Tensor x({t.batch, emb});
    for (std::size_t b = 0; b < t.batch; ++b) {
      const std::size_t row = b * t.steps + s;
      std::copy_n(t.cnn_out.data() + row * cd, cd, x.data() + b * emb);
      if (t.statistics) {
        for (std::size_t k = 0; k < pd; ++k) x[b * emb + cd + k] = gate * t.pl_out[row * pd + k];
      }
    }
    state = nn::lstm_step(P.lstm, state, x, &t.lstm[s]);
  }

  const std::size_t hid = cfg.lstm_hidden, fo = cfg.fl_encoder_out, hw = cfg.head_input_width();
  t.head_in = Tensor({t.batch, hw});
  for (std::size_t b = 0; b < t.batch; ++b) {
    std::copy_n(state.h.data() + b * hid, hid, t.head_in.data() + b * hw);
    if (t.statistics) {
      for (std::size_t k = 0; k < fo; ++k) t.head_in[b * hw + hid + k] = gate * t.fl_out[b * fo + k];
    }
  }
  const Tensor* x = &t.head_in;
  t.head_out.reserve(P.head.size());
  for (const auto& layer : P.head) {
    t.head_out.push_back(nn::dense_forward(*x, layer));
    x = &t.head_out.back();
  }
  return t;
}

void backward_batch(const HstfModel& model, const BatchTrace& t, const std::vector<double>& dlogits, HstfParams& g) {
  const HstfConfig& cfg = model.config();
  const HstfParams& P = model.params;
  const double gate = cfg.statistics_gate;
  const std::size_t n = t.batch * t.steps;

  Tensor dy({t.batch, 1}, dlogits);
  for (std::size_t k = P.head.size(); k-- > 0;) {
    const Tensor& in = k == 0 ? t.head_in : t.head_out[k - 1];
    dy = nn::dense_backward(in, t.head_out[k], P.head[k], dy, g.head[k], true);
  }

  const std::size_t hid = cfg.lstm_hidden, fo = cfg.fl_encoder_out, hw = cfg.head_input_width();
  Tensor dh({t.batch, hid});
  for (std::size_t b = 0; b < t.batch; ++b) std::copy_n(dy.data() + b * hw, hid, dh.data() + b * hid);
  if (t.statistics) {
    Tensor dfl({t.batch, fo});
    for (std::size_t b = 0; b < t.batch; ++b) {
      for (std::size_t k = 0; k < fo; ++k) dfl[b * fo + k] = gate * dy[b * hw + hid + k];
    }
    nn::dense_backward(t.fl_in, t.fl_out, P.fl_encoder, dfl, g.fl_encoder, false);
  }

  const std::size_t cd = cfg.cnn_dense, pd = cfg.pl_dense, emb = cfg.embedding_width();
  Tensor dcnn({n, cd});
  Tensor dpl = t.statistics ? Tensor({n, pd}) : Tensor{};
  Tensor dc;
  for (std::size_t s = t.steps; s-- > 0;) {
    nn::LstmStepGrad sg = nn::lstm_step_backward(P.lstm, t.lstm[s], dh, dc, g.lstm);
    for (std::size_t b = 0; b < t.batch; ++b) {
      const std::size_t row = b * t.steps + s;
      std::copy_n(sg.x.data() + b * emb, cd, dcnn.data() + row * cd);
      if (t.statistics) {
        for (std::size_t k = 0; k < pd; ++k) dpl[row * pd + k] = gate * sg.x[b * emb + cd + k];
      }
    }
    dh = std::move(sg.h_prev);
    dc = std::move(sg.c_prev);
  }

  if (t.statistics) {
    const Tensor dhidden = nn::dense_backward(t.pl_hidden, t.pl_out, P.pl_dense, dpl, g.pl_dense, true);
    nn::dense_backward(t.pl_in, t.pl_hidden, P.pl_encoder, dhidden, g.pl_encoder, false);
  }

  const bool has_conv = !P.conv.empty();
  const Tensor dflat = nn::dense_backward(t.flat, t.cnn_out, P.cnn_dense, dcnn, g.cnn_dense, has_conv);
  if (!has_conv) return;
  const std::size_t flat_w = model.cnn_flat_width();
  for (std::size_t row = 0; row < n; ++row) {
    const PacketTrace& pt = t.packets[row];
    nn::FeatureMapGrad gm = nn::split_grad(dflat.data() + row * flat_w, pt.maps.back());
    for (std::size_t s = P.conv.size(); s-- > 0;) {
      gm = nn::pool_backward(pt.maps[2 * s + 1], pt.maps[2 * s + 2], pt.caches[2 * s + 1], gm);
      gm = nn::conv_backward(pt.maps[2 * s], pt.maps[2 * s + 1], pt.caches[2 * s], P.conv[s], gm, g.conv[s], s > 0);
    }
  }
}

double logit_of(const BatchTrace& t, std::size_t b) { return t.head_out.back()[b]; }

std::uint64_t fold_values(std::uint64_t h, const std::vector<double>& values) {
  return nn::fold_relu_pattern(h, Tensor({values.size()}, values));
}

std::uint64_t region_of(const BatchTrace& t) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& pt : t.packets) {
    for (std::size_t k = 1; k < pt.maps.size(); ++k) {
      const auto& m = pt.maps[k];
      if (k % 2 == 1) {  // conv output (ReLU)
        if (!m.active.empty()) h = nn::fold_relu_pattern(h, m.active);
        h = fold_values(h, m.fill);
      } else {
        for (std::uint32_t a : pt.caches[k - 1].pool.argmax) h = (h ^ a) * 0x100000001b3ULL;
      }
    }
  }
  h = nn::fold_relu_pattern(h, t.cnn_out);
  if (t.statistics) {
    h = nn::fold_relu_pattern(h, t.pl_hidden);
    h = nn::fold_relu_pattern(h, t.pl_out);
    h = nn::fold_relu_pattern(h, t.fl_out);
  }
  for (std::size_t k = 0; k + 1 < t.head_out.size(); ++k) h = nn::fold_relu_pattern(h, t.head_out[k]);
  return h;
}

}  // namespace

Tensor packet_branch(const HstfModel& model, const PacketInput& packet) {
  const HstfConfig& cfg = model.config();
  const HstfParams& P = model.params;
  if (packet.pl.size() != features::kPlSize) throw Error(Errc::ShapeMismatch, "PL vector must have 100 entries");
  PacketTrace trace;
  Tensor flat({model.cnn_flat_width()});
  run_cnn(model, packet, trace, flat.data());
  const Tensor cnn = nn::dense_forward(flat, P.cnn_dense);
  Tensor out({cfg.embedding_width()});
  std::copy_n(cnn.data(), cfg.cnn_dense, out.data());
  if (cfg.statistics_gate != 0.0) {
    model.note_statistics_read();
    const Tensor pl = nn::dense_forward(nn::dense_forward(Tensor({features::kPlSize}, packet.pl), P.pl_encoder),
                                        P.pl_dense);
    for (std::size_t k = 0; k < cfg.pl_dense; ++k) out[cfg.cnn_dense + k] = cfg.statistics_gate * pl[k];
  }
  return out;
}

double flow_forward(const HstfModel& model, const FlowInput& flow) {
  const FlowInput* ptr = &flow;
  const BatchTrace t = forward_batch(model, std::span<const FlowInput* const>(&ptr, 1));
  return nn::sigmoid(logit_of(t, 0));
}

std::vector<double> predict_scores(const HstfModel& model, std::span<const FlowInput> flows, std::size_t batch_size) {
  std::vector<double> scores;
  scores.reserve(flows.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<const FlowInput*> ptrs;
  for (std::size_t start = 0; start < flows.size(); start += batch_size) {
    ptrs.clear();
    for (std::size_t i = start; i < std::min(flows.size(), start + batch_size); ++i) ptrs.push_back(&flows[i]);
    const BatchTrace t = forward_batch(model, ptrs);
    for (std::size_t b = 0; b < ptrs.size(); ++b) scores.push_back(nn::sigmoid(logit_of(t, b)));
  }
  return scores;
}

double loss_and_gradient(const HstfModel& model, std::span<const FlowInput* const> batch, HstfParams& grad,
                         std::vector<double>* scores) {
  if (batch.empty()) return 0.0;
  const BatchTrace t = forward_batch(model, batch);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> dlogits(batch.size());
  if (scores) scores->clear();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double z = logit_of(t, b);
    if (scores) scores->push_back(nn::sigmoid(z));
    loss += nn::bce_with_logit(z, batch[b]->target);
    dlogits[b] = nn::bce_with_logit_grad(z, batch[b]->target) * inv;
  }
  backward_batch(model, t, dlogits, grad);
  return loss * inv;
}

nn::Evaluation evaluate_loss(const HstfModel& model, std::span<const FlowInput* const> batch) {
  const BatchTrace t = forward_batch(model, batch);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) loss += nn::bce_with_logit(logit_of(t, b), batch[b]->target);
  return {batch.empty() ? 0.0 : loss / static_cast<double>(batch.size()), region_of(t)};
}

nn::GradCheckReport gradient_check(HstfModel& model, std::span<const FlowInput> batch,
                                   const nn::GradCheckOptions& options) {
  std::vector<const FlowInput*> ptrs;
  for (const auto& f : batch) ptrs.push_back(&f);
  HstfParams grad = model.params.zeros_like();
  loss_and_gradient(model, ptrs, grad);
  auto values = model.params.named_tensors();
  auto grads = grad.named_tensors();
  std::vector<nn::ParamRef> refs;
  for (std::size_t i = 0; i < values.size(); ++i) refs.push_back({values[i].first, values[i].second, grads[i].second});
  return nn::finite_diff_check(refs, [&] { return evaluate_loss(model, ptrs); }, options);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(bool predicted, bool actual) {
    if (predicted && actual) {
      ++tp;
    } else if (predicted) {
      ++fp;
    } else if (actual) {
      ++fn;
    } else {
      ++tn;
    }
  }
  experiments::Metrics metrics() const { return experiments::metrics_from_counts(tp, fp, tn, fn); }
};

}  // namespace

experiments::Metrics evaluate(const HstfModel& model, std::span<const FlowInput> flows, double threshold) {
  const std::vector<double> scores = predict_scores(model, flows);
  Confusion c;
  for (std::size_t i = 0; i < flows.size(); ++i) c.add(scores[i] >= threshold, flows[i].target >= 0.5);
  return c.metrics();
}

TrainHistory train_inputs(HstfModel& model, std::span<const FlowInput> train_set, std::span<const FlowInput> validation,
                          const EpochCallback& on_epoch) {
  const HstfConfig& cfg = model.config();
  std::size_t positives = 0;
  for (const auto& f : train_set) positives += f.target >= 0.5 ? 1 : 0;
  if (positives == 0 || positives == train_set.size()) {
    throw Error(Errc::SingleClassDataset, "training data must contain both benign and malicious flows");
  }

  TrainHistory history;
  nn::Optimizer optimizer({cfg.optimizer, cfg.learning_rate});
  HstfParams grad = model.params.zeros_like();
  auto param_refs = model.params.named_tensors();
  auto grad_refs = grad.named_tensors();
  std::vector<nn::Tensor*> params, grads_mut;
  std::vector<const nn::Tensor*> grads;
  for (auto& [name, t] : param_refs) params.push_back(t);
  for (auto& [name, t] : grad_refs) {
    grads_mut.push_back(t);
    grads.push_back(t);
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<const FlowInput*> batch;
  std::vector<double> scores;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    Confusion running;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = s; i < std::min(order.size(), s + cfg.batch_size); ++i) batch.push_back(&train_set[order[i]]);
      for (nn::Tensor* g : grads_mut) g->fill(0.0);
      loss_sum += loss_and_gradient(model, batch, grad, &scores) * static_cast<double>(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) running.add(scores[b] >= 0.5, batch[b]->target >= 0.5);
      optimizer.step(params, grads);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.training = running.metrics();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!validation.empty()) {
      rec.validated = true;
      rec.validation = evaluate(model, validation);
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (cfg.early_stop_f1 > 0.0 && rec.training.f1 >= cfg.early_stop_f1) {
      history.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  return history;
}

TrainResult train(std::span<const features::EncodedFlow> train_set, const HstfConfig& config,
                  std::span<const features::EncodedFlow> validation, const EpochCallback& on_epoch) {
  bool benign = false, malicious = false;
  for (const auto& f : train_set) {
    if (f.label == http::Label::Unlabeled) throw Error(Errc::InvalidArgument, "training flows must be labeled");
    (f.label == http::Label::Malicious ? malicious : benign) = true;
  }
  if (!benign || !malicious) {
    throw Error(Errc::SingleClassDataset, "training data must contain both benign and malicious flows");
  }
  TrainResult result{HstfModel(config), {}};
  result.model.stats = features::NormalizationStats::fit(train_set);
  std::vector<FlowInput> train_inputs_v, validation_inputs;
  train_inputs_v.reserve(train_set.size());
  for (const auto& f : train_set) train_inputs_v.push_back(make_flow_input(f, result.model));
  for (const auto& f : validation) validation_inputs.push_back(make_flow_input(f, result.model));
  result.history = train_inputs(result.model, train_inputs_v, validation_inputs, on_epoch);
  return result;
}

Prediction predict(const http::Flow& flow, const HstfModel& model, double threshold) {
  if (flow.messages.empty()) throw Error(Errc::EmptyFlow, "cannot score a flow without messages");
  const auto encoded = features::encode_flow(flow, model.config().packet_size, model.config().flow_size);
  const double score = flow_forward(model, make_flow_input(encoded, model));
  return {score >= threshold ? http::Label::Malicious : http::Label::Benign, score};
}

}  // namespace hstf::model
