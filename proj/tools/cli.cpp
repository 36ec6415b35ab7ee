#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hstf/capture.hpp"
#include "hstf/encoded_io.hpp"
#include "hstf/error.hpp"
#include "hstf/experiments.hpp"
#include "hstf/features.hpp"
#include "hstf/flow_io.hpp"
#include "hstf/generator.hpp"
#include "hstf/ingest.hpp"
#include "hstf/model.hpp"

namespace hstf::cli {
namespace {

using Json = nlohmann::json;

/** A failure that already knows its exit code. */
class Failure : public std::runtime_error {
 public:
  Failure(int code, const std::string& message) : std::runtime_error(message), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::SingleClassDataset:
      return kSingleClass;
    case Errc::ConfigMismatch:
    case Errc::ShapeMismatch:
    case Errc::VersionMismatch:
      return kMismatch;
    default:
      return kBadInput;
  }
}

/** Library writers report failures as Io; inside this wrapper that means exit code 3. */
template <typename Fn>
void writing(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == Errc::Io) throw Failure(kWriteFailure, e.what());
    throw;
  }
}

bool is_stdout(const std::string& path) { return path.empty() || path == "-"; }

/** Sends `body` to `path`, or to `fallback` when the path is empty or "-". */
void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (is_stdout(path)) {
    body(fallback);
    fallback.flush();
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Failure(kWriteFailure, "cannot create '" + path + "'");
  body(file);
  file.flush();
  if (!file) throw Failure(kWriteFailure, "write to '" + path + "' failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(kBadInput, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/** Options shared by every subcommand; unset optionals fall back to the config file, then defaults. */
struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;
  std::optional<std::size_t> packet_size;
  std::optional<std::size_t> flow_size;
  std::optional<std::string> proportion;
  std::string out;
  std::string config_path;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> optimizer;
  std::optional<std::string> conv;
  std::optional<std::size_t> cnn_dense;
  std::optional<std::size_t> lstm_hidden;
  std::optional<std::vector<std::size_t>> head;
  std::optional<double> gate;
  std::optional<double> early_stop_f1;
  std::optional<double> threshold;
  bool quiet = false;
};

struct RunConfig {
  model::HstfConfig model;
  experiments::ProportionSpec proportion;
  std::size_t repeats = 3;
  double threshold = 0.5;
};

/** Defaults, then the config file, then explicit flags. */
RunConfig resolve(const GlobalOptions& g) {
  RunConfig rc;
  if (!g.config_path.empty()) {
    const std::string text = read_text(g.config_path);
    try {
      Json doc = Json::parse(text);
      if (!doc.is_object()) throw Error(Errc::InvalidArgument, "config must be a JSON object");
      if (doc.contains("proportion")) {
        rc.proportion = experiments::ProportionSpec::parse(doc["proportion"].get<std::string>());
        doc.erase("proportion");
      }
      if (doc.contains("repeats")) {
        rc.repeats = doc["repeats"].get<std::size_t>();
        doc.erase("repeats");
      }
      if (doc.contains("threshold")) {
        rc.threshold = doc["threshold"].get<double>();
        doc.erase("threshold");
      }
      rc.model = model::config_from_json(doc.dump(), rc.model);
    } catch (const Json::exception& e) {
      throw Failure(kBadInput, "config '" + g.config_path + "': " + e.what());
    } catch (const Error& e) {
      throw Failure(kBadInput, "config '" + g.config_path + "': " + e.what());
    }
  }
  try {
    auto& m = rc.model;
    if (g.seed) m.seed = *g.seed;
    if (g.packet_size) m.packet_size = *g.packet_size;
    if (g.flow_size) m.flow_size = *g.flow_size;
    if (g.epochs) m.epochs = *g.epochs;
    if (g.batch_size) m.batch_size = *g.batch_size;
    if (g.learning_rate) m.learning_rate = *g.learning_rate;
    if (g.optimizer) m.optimizer = nn::parse_optimizer(*g.optimizer);
    if (g.conv) m.conv = model::parse_conv_stages(*g.conv);
    if (g.cnn_dense) m.cnn_dense = *g.cnn_dense;
    if (g.lstm_hidden) m.lstm_hidden = *g.lstm_hidden;
    if (g.head) m.head_layers = *g.head;
    if (g.gate) m.statistics_gate = *g.gate;
    if (g.early_stop_f1) m.early_stop_f1 = *g.early_stop_f1;
    if (g.proportion) rc.proportion = experiments::ProportionSpec::parse(*g.proportion);
    if (g.repeats) rc.repeats = *g.repeats;
    if (g.threshold) rc.threshold = *g.threshold;
    m.validate();
    if (rc.repeats == 0) throw Error(Errc::InvalidArgument, "repeats must be at least 1");
  } catch (const Error& e) {
    throw Failure(kUsage, e.what());
  }
  return rc;
}

experiments::RunSettings settings_for(const RunConfig& rc, const GlobalOptions& g, std::ostream& err) {
  experiments::RunSettings s;
  s.config = rc.model;
  s.proportion = rc.proportion;
  s.repeats = rc.repeats;
  s.threshold = rc.threshold;
  if (!g.quiet) s.log = [&err](const std::string& line) { err << line << '\n'; };
  return s;
}

std::string format_metrics(const experiments::Metrics& m) {
  return "P " + experiments::format_decimal(m.precision) + " R " + experiments::format_decimal(m.recall) + " F1 " +
         experiments::format_decimal(m.f1);
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string input;
  std::string label = "unlabeled";
  bool mask = false;
  std::vector<std::string> mask_fields;
  std::size_t hash_length = 16;
};

int cmd_ingest(const IngestArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  ingest::IngestOptions opts;
  opts.label = http::parse_label(a.label);
  if (a.mask) {
    http::MaskConfig mask;
    if (!a.mask_fields.empty()) mask.fields_to_mask = {a.mask_fields.begin(), a.mask_fields.end()};
    mask.hash_output_length = a.hash_length;
    opts.mask = mask;
  }
  const auto result = ingest::ingest_capture(a.input, opts);
  emit(g.out, out, [&](std::ostream& os) { http::write_ndjson(os, result.flows); });
  const auto& s = result.stats;
  err << "records " << s.records << ", tcp segments " << s.tcp_segments << ", skipped frames " << s.skipped_frames
      << ", malformed frames " << s.malformed_frames << ", streams " << s.streams << ", http flows " << s.http_flows
      << ", non-http streams " << s.non_http_streams << ", lossy streams " << s.lossy_streams
      << ", malformed messages " << s.malformed_messages << '\n';
  return kOk;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::size_t benign = 0;
  std::size_t malicious = 0;
  std::string profiles;
  std::string pcap;
  std::string manifest;
  std::size_t mss = 1460;
  bool big_endian = false;
};

int cmd_gen(const GenArgs& a, const GlobalOptions& g, std::ostream& out) {
  generator::ProfileSet profiles;
  try {
    profiles = a.profiles.empty() ? generator::default_profiles() : generator::load_profiles(a.profiles);
  } catch (const Error& e) {
    throw Failure(kBadInput, e.what());
  }
  const std::uint64_t seed = g.seed.value_or(1);
  generator::CaptureLayout layout;
  layout.mss = a.mss;
  layout.byte_order = a.big_endian ? capture::ByteOrder::Big : capture::ByteOrder::Little;
  const auto flows = generator::generate_corpus(profiles, a.benign, a.malicious, seed, layout);

  writing([&] { http::write_ndjson_file(g.out, flows); });
  if (!a.pcap.empty()) {
    writing([&] { capture::write_capture(a.pcap, generator::render_capture(flows, layout), layout.byte_order); });
  }
  const std::string manifest = a.manifest.empty() ? g.out + ".manifest.csv" : a.manifest;
  emit(manifest, out, [&](std::ostream& os) {
    os << "# seed=" << seed << "\n# profiles_sha256=" << profiles.hash << "\n# benign=" << a.benign
       << " malicious=" << a.malicious << " mss=" << a.mss << "\n";
    os << "flow_id,label,messages,wire_bytes\n";
    for (const auto& f : flows) {
      std::size_t bytes = 0;
      for (const auto& m : f.messages) bytes += m.wire_length;
      os << f.flow_id << ',' << http::to_string(f.label) << ',' << f.messages.size() << ',' << bytes << '\n';
    }
  });
  const auto s = generator::summarize(flows);
  out << "flows " << s.flows << ", messages " << s.messages << ", mean message bytes "
      << experiments::format_decimal(s.mean_message_bytes) << " (target "
      << experiments::format_decimal(generator::kTargetMeanMessageBytes) << "), mean messages per flow "
      << experiments::format_decimal(s.mean_flow_messages) << " (target "
      << experiments::format_decimal(generator::kTargetMeanFlowMessages) << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- extract

int cmd_extract(const std::string& input, const GlobalOptions& g, std::ostream& out) {
  const RunConfig rc = resolve(g);
  const auto flows = http::read_ndjson_file(input);
  features::EncodedDataset ds;
  ds.packet_size = rc.model.packet_size;
  ds.flow_size = rc.model.flow_size;
  ds.flows.reserve(flows.size());
  for (const auto& f : flows) ds.flows.push_back(features::encode_flow(f, ds.packet_size, ds.flow_size));
  writing([&] { features::write_encoded_dataset(g.out, ds); });
  out << "encoded " << ds.flows.size() << " flows at packet_size " << ds.packet_size << ", flow_size "
      << ds.flow_size << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string input;
  std::string history;
  std::string test_flows;
};

int cmd_train(const TrainArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(g);
  const auto flows = http::read_ndjson_file(a.input);
  auto settings = settings_for(rc, g, err);
  settings.track_epochs = !a.history.empty();
  auto fit = experiments::fit_split(flows, settings, rc.model.seed);

  writing([&] { model::save_model(fit.model, g.out); });
  if (!a.history.empty()) {
    emit(a.history, out, [&](std::ostream& os) { experiments::write_history_csv(os, fit.record.history); });
  }
  if (!a.test_flows.empty()) {
    std::vector<http::Flow> held_out;
    held_out.reserve(fit.split.test.size());
    for (std::size_t i : fit.split.test) held_out.push_back(flows[i]);
    writing([&] { http::write_ndjson_file(a.test_flows, held_out); });
  }
  const auto& r = fit.record;
  out << "train flows " << r.train_size << ", test flows " << r.test_size << ", epochs " << r.history.epochs.size()
      << (r.history.stopped_early ? " (stopped early)" : "") << ", train time "
      << experiments::format_decimal(r.train_seconds) << " s\n";
  out << "test " << format_metrics(r.metrics) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- eval / predict

model::HstfModel load_checked(const std::string& path, const GlobalOptions& g) {
  auto m = model::load_model(path);
  const auto& c = m.config();
  if (g.packet_size && *g.packet_size != c.packet_size) {
    throw Error(Errc::ConfigMismatch, "model was trained with packet_size " + std::to_string(c.packet_size));
  }
  if (g.flow_size && *g.flow_size != c.flow_size) {
    throw Error(Errc::ConfigMismatch, "model was trained with flow_size " + std::to_string(c.flow_size));
  }
  return m;
}

bool is_encoded_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 9> head{};
  in.read(head.data(), head.size());
  return in.gcount() == 9 && std::string_view(head.data() + 1, 8) == std::string_view("HSTFENC\0", 8);
}

std::vector<model::FlowInput> load_inputs(const std::string& path, const model::HstfModel& m) {
  std::vector<model::FlowInput> inputs;
  const auto& c = m.config();
  if (is_encoded_dataset(path)) {
    const auto ds = features::read_encoded_dataset(path);
    if (ds.packet_size != c.packet_size || ds.flow_size != c.flow_size) {
      throw Error(Errc::ConfigMismatch, "dataset was encoded at packet_size " + std::to_string(ds.packet_size) +
                                            ", flow_size " + std::to_string(ds.flow_size) + "; the model expects " +
                                            std::to_string(c.packet_size) + ", " + std::to_string(c.flow_size));
    }
    for (const auto& f : ds.flows) inputs.push_back(model::make_flow_input(f, m));
  } else {
    for (const auto& f : http::read_ndjson_file(path)) {
      inputs.push_back(model::make_flow_input(features::encode_flow(f, c.packet_size, c.flow_size), m));
    }
  }
  return inputs;
}

int cmd_eval(const std::string& model_path, const std::string& input, const GlobalOptions& g, std::ostream& out) {
  const auto m = load_checked(model_path, g);
  const double threshold = g.threshold.value_or(0.5);
  const auto start = std::chrono::steady_clock::now();
  const auto inputs = load_inputs(input, m);
  const auto metrics = model::evaluate(m, inputs, threshold);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::vector<experiments::MetricsRow> rows = {
      {std::filesystem::path(input).filename().string(), metrics.precision, metrics.recall, metrics.f1, 0.0,
       seconds}};
  emit(g.out, out, [&](std::ostream& os) { experiments::write_metrics_csv(os, "dataset", rows); });
  return kOk;
}

int cmd_predict(const std::string& model_path, const std::string& input, const GlobalOptions& g, std::ostream& out) {
  const auto m = load_checked(model_path, g);
  const double threshold = g.threshold.value_or(0.5);
  const auto flows = http::read_ndjson_file(input);
  emit(g.out, out, [&](std::ostream& os) {
    os << "flow_id,label,score\n";
    for (const auto& f : flows) {
      const auto p = model::predict(f, m, threshold);
      os << f.flow_id << ',' << http::to_string(p.label) << ',' << experiments::format_decimal(p.score) << '\n';
    }
  });
  return kOk;
}

// ---------------------------------------------------------------- sweep / imbalance / ablation

int cmd_sweep(const std::string& input, const std::string& axis_name, const std::vector<std::size_t>& values,
              const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(g);
  const auto axis = experiments::parse_axis(axis_name);
  const auto flows = http::read_ndjson_file(input);
  const auto points = experiments::run_sweep(flows, axis, values, settings_for(rc, g, err));
  std::vector<experiments::MetricsRow> rows;
  for (const auto& p : points) rows.push_back(experiments::to_row(std::to_string(p.value), p.summary));
  emit(g.out, out, [&](std::ostream& os) { experiments::write_metrics_csv(os, experiments::to_string(axis), rows); });
  return kOk;
}

int cmd_imbalance(const std::string& input, const std::vector<std::string>& specs_text, const std::string& curves,
                  const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(g);
  std::vector<experiments::ProportionSpec> specs;
  try {
    for (const auto& t : specs_text) specs.push_back(experiments::ProportionSpec::parse(t));
  } catch (const Error& e) {
    throw Failure(kUsage, e.what());
  }
  const auto flows = http::read_ndjson_file(input);
  const auto points = experiments::run_imbalance(flows, specs, settings_for(rc, g, err));
  std::vector<experiments::MetricsRow> rows;
  for (const auto& p : points) rows.push_back(experiments::to_row(p.proportion.to_string(), p.summary));
  emit(g.out, out, [&](std::ostream& os) { experiments::write_metrics_csv(os, "proportion", rows); });
  if (!curves.empty()) emit(curves, out, [&](std::ostream& os) { experiments::write_curves_csv(os, points); });
  return kOk;
}

int cmd_ablation(const std::string& input, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(g);
  const auto flows = http::read_ndjson_file(input);
  const auto result = experiments::run_ablation(flows, settings_for(rc, g, err));
  const std::vector<experiments::MetricsRow> rows = {experiments::to_row("on", result.with_statistics),
                                                     experiments::to_row("off", result.without_statistics)};
  emit(g.out, out, [&](std::ostream& os) { experiments::write_metrics_csv(os, "statistics", rows); });
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"HTTP flow classifier: capture ingestion, feature extraction, training and evaluation", "hstf"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for splits, weights and the generator (default 1)");
  app.add_option("--repeats", g.repeats, "Repeated runs per experiment point (default 3)")->check(CLI::PositiveNumber);
  app.add_option("--packet-size", g.packet_size, "Bytes of each message fed to the CNN (default 400)")
      ->check(CLI::PositiveNumber);
  app.add_option("--flow-size", g.flow_size, "Leading messages per flow (default 4)")->check(CLI::Range(1, 50));
  app.add_option("--proportion", g.proportion, "Training malicious:benign ratio M:B (default 3:10)");
  app.add_option("--out,-o", g.out, "Output file; '-' or omitted means stdout where allowed");
  app.add_option("--config", g.config_path, "JSON file of model settings plus proportion/repeats/threshold")
      ->check(CLI::ExistingFile);
  app.add_option("--epochs", g.epochs, "Training epochs (default 10)");
  app.add_option("--batch-size", g.batch_size, "Mini-batch size (default 32)")->check(CLI::PositiveNumber);
  app.add_option("--learning-rate", g.learning_rate, "Optimizer step size (default 0.001)");
  app.add_option("--optimizer", g.optimizer, "adam or sgd (default adam)");
  app.add_option("--conv", g.conv, "Convolution stages KxHxW[/PHxPW], comma separated (default 32x3x7,64x3x5)");
  app.add_option("--cnn-dense", g.cnn_dense, "Width of the CNN dense layer (default 128)");
  app.add_option("--lstm-hidden", g.lstm_hidden, "LSTM hidden width (default 128)");
  app.add_option("--head", g.head, "Hidden widths of the classifier head, comma separated (default 64)")
      ->delimiter(',');
  app.add_option("--gate", g.gate, "Statistics gate: 1 uses PL/FL vectors, 0 ignores them (default 1)");
  app.add_option("--early-stop-f1", g.early_stop_f1, "Stop once the running training F1 reaches this (default off)");
  app.add_option("--threshold", g.threshold, "Malicious score threshold (default 0.5)");
  app.add_flag("--quiet,-q", g.quiet, "Suppress progress lines on stderr");

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Capture file to NDJSON flows");
  ingest->add_option("capture", ingest_args.input, "pcap file")->required();
  ingest->add_option("--label", ingest_args.label, "Label for every flow")
      ->check(CLI::IsMember({"benign", "malicious", "unlabeled"}));
  ingest->add_flag("--mask", ingest_args.mask, "Hash sensitive header values and URL paths");
  ingest->add_option("--mask-fields", ingest_args.mask_fields, "Header names to mask (default host,cookie,authorization,referer)")
      ->delimiter(',');
  ingest->add_option("--hash-length", ingest_args.hash_length, "Hex digits kept from each digest")
      ->check(CLI::Range(1, 64));

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a labeled synthetic corpus");
  gen->add_option("--benign", gen_args.benign, "Benign flow count");
  gen->add_option("--malicious", gen_args.malicious, "Trojan flow count");
  gen->add_option("--profiles", gen_args.profiles, "Profile JSON (default: built-in profiles)");
  gen->add_option("--pcap", gen_args.pcap, "Also write the corpus as a capture file");
  gen->add_option("--manifest", gen_args.manifest, "Manifest path (default <out>.manifest.csv)");
  gen->add_option("--mss", gen_args.mss, "TCP segment payload size for the capture")->check(CLI::PositiveNumber);
  gen->add_flag("--big-endian", gen_args.big_endian, "Write the capture in big-endian byte order");

  std::string extract_input;
  auto* extract = app.add_subcommand("extract", "Encode NDJSON flows into a binary feature dataset");
  extract->add_option("flows", extract_input, "NDJSON flows")->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Split, train, save the model and report test metrics");
  train->add_option("flows", train_args.input, "Labeled NDJSON flows")->required();
  train->add_option("--history", train_args.history, "Per-epoch CSV (evaluates the test split every epoch)");
  train->add_option("--test-flows", train_args.test_flows, "Write the held-out test flows as NDJSON");

  std::string eval_model, eval_input;
  auto* eval = app.add_subcommand("eval", "Metrics CSV of a model on labeled flows or an extracted dataset");
  eval->add_option("model", eval_model, "Model file")->required();
  eval->add_option("flows", eval_input, "NDJSON flows or extracted dataset")->required();

  std::string predict_model, predict_input;
  auto* predict = app.add_subcommand("predict", "Label and score per flow");
  predict->add_option("model", predict_model, "Model file")->required();
  predict->add_option("flows", predict_input, "NDJSON flows")->required();

  std::string sweep_input, sweep_axis;
  std::vector<std::size_t> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Repeated runs across packet or flow sizes");
  sweep->add_option("flows", sweep_input, "Labeled NDJSON flows")->required();
  sweep->add_option("--axis", sweep_axis, "packet_size or flow_size")
      ->required()
      ->check(CLI::IsMember({"packet_size", "packet-size", "flow_size", "flow-size"}));
  sweep->add_option("--values", sweep_values, "Comma-separated axis values")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);

  std::string imbalance_input, curves_path;
  std::vector<std::string> imbalance_specs;
  auto* imbalance = app.add_subcommand("imbalance", "Repeated runs across training class ratios");
  imbalance->add_option("flows", imbalance_input, "Labeled NDJSON flows")->required();
  imbalance->add_option("--proportions", imbalance_specs, "Comma-separated M:B ratios")->required()->delimiter(',');
  imbalance->add_option("--curves", curves_path, "Per-epoch test recall CSV");

  std::string ablation_input;
  auto* ablation = app.add_subcommand("ablation", "Repeated runs with the statistics gate on and off");
  ablation->add_option("flows", ablation_input, "Labeled NDJSON flows")->required();

  for (auto* sub : {gen, extract, train}) sub->callback([&g, sub] {
    if (is_stdout(g.out)) throw CLI::RequiredError("--out is required for " + sub->get_name());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_args, g, out, err);
    if (*gen) return cmd_gen(gen_args, g, out);
    if (*extract) return cmd_extract(extract_input, g, out);
    if (*train) return cmd_train(train_args, g, out, err);
    if (*eval) return cmd_eval(eval_model, eval_input, g, out);
    if (*predict) return cmd_predict(predict_model, predict_input, g, out);
    if (*sweep) return cmd_sweep(sweep_input, sweep_axis, sweep_values, g, out, err);
    if (*imbalance) return cmd_imbalance(imbalance_input, imbalance_specs, curves_path, g, out, err);
    if (*ablation) return cmd_ablation(ablation_input, g, out, err);
  } catch (const Failure& e) {
    err << "error: " << e.what() << '\n';
    return e.code();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kUsage;
}

}  // namespace hstf::cli
