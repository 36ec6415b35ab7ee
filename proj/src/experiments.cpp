#include "hstf/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "hstf/error.hpp"
#include "hstf/features.hpp"

namespace hstf::experiments {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::size_t parse_count(std::string_view text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(Errc::InvalidArgument, "not a positive integer: '" + std::string(text) + "'");
  }
  return v;
}

void log(const RunSettings& s, const std::string& line) {
  if (s.log) s.log(line);
}

RunSummary summarize(std::vector<RunRecord> runs) {
  RunSummary s;
  s.runs = std::move(runs);
  const auto n = static_cast<double>(s.runs.size());
  for (const auto& r : s.runs) {
    s.precision += r.metrics.precision / n;
    s.recall += r.metrics.recall / n;
    s.f1 += r.metrics.f1 / n;
    s.train_seconds += r.train_seconds / n;
    s.test_seconds += r.test_seconds / n;
  }
  return s;
}

}  // namespace

ProportionSpec ProportionSpec::parse(std::string_view text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string_view::npos) throw Error(Errc::InvalidArgument, "proportion must look like M:B");
  ProportionSpec p{parse_count(text.substr(0, colon)), parse_count(text.substr(colon + 1))};
  if (p.malicious == 0 || p.benign == 0) throw Error(Errc::InvalidArgument, "proportion parts must be at least 1");
  return p;
}

std::string ProportionSpec::to_string() const { return std::to_string(malicious) + ":" + std::to_string(benign); }

Split make_split(std::span<const http::Label> labels, const ProportionSpec& spec, std::uint64_t seed,
                 const SplitOptions& options) {
  if (spec.malicious == 0 || spec.benign == 0) throw Error(Errc::InvalidArgument, "proportion parts must be at least 1");
  if (!(options.train_malicious_fraction > 0.0 && options.train_malicious_fraction < 1.0) ||
      !(options.test_benign_fraction >= 0.0 && options.test_benign_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "split fractions must lie in (0,1)");
  }
  std::vector<std::size_t> malicious, benign;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == http::Label::Malicious) malicious.push_back(i);
    if (labels[i] == http::Label::Benign) benign.push_back(i);
  }
  if (malicious.empty() || benign.empty()) {
    throw Error(Errc::SingleClassDataset, "the dataset needs both benign and malicious flows");
  }
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  shuffle(malicious, rng);
  shuffle(benign, rng);

  const auto train_mal = static_cast<std::size_t>(
      std::floor(options.train_malicious_fraction * static_cast<double>(malicious.size()) + 1e-9));
  const std::size_t train_ben = (train_mal * spec.benign + spec.malicious / 2) / spec.malicious;
  const std::size_t test_ben = std::min(
      options.max_test_benign,
      static_cast<std::size_t>(std::floor(options.test_benign_fraction * static_cast<double>(benign.size()) + 1e-9)));
  if (train_mal == 0 || train_mal == malicious.size()) {
    throw Error(Errc::InsufficientData, "need malicious flows on both sides of the split (have " +
                                            std::to_string(malicious.size()) + ")");
  }
  if (train_ben == 0 || train_ben + test_ben > benign.size()) {
    throw Error(Errc::InsufficientData, "ratio " + spec.to_string() + " needs " + std::to_string(train_ben) +
                                            " benign training flows plus " + std::to_string(test_ben) +
                                            " test flows; the pool has " + std::to_string(benign.size()));
  }

  Split split;
  split.train.assign(malicious.begin(), malicious.begin() + static_cast<std::ptrdiff_t>(train_mal));
  split.test.assign(malicious.begin() + static_cast<std::ptrdiff_t>(train_mal), malicious.end());
  split.test.insert(split.test.end(), benign.begin(), benign.begin() + static_cast<std::ptrdiff_t>(test_ben));
  split.train.insert(split.train.end(), benign.begin() + static_cast<std::ptrdiff_t>(test_ben),
                     benign.begin() + static_cast<std::ptrdiff_t>(test_ben + train_ben));
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

FittedRun fit_split(std::span<const http::Flow> flows, const RunSettings& settings, std::uint64_t seed) {
  std::vector<http::Label> labels;
  labels.reserve(flows.size());
  for (const auto& f : flows) labels.push_back(f.label);
  Split split = make_split(labels, settings.proportion, seed, settings.split);

  model::HstfConfig cfg = settings.config;
  cfg.seed = seed;
  RunRecord rec;
  rec.seed = seed;
  rec.train_size = split.train.size();
  rec.test_size = split.test.size();

  const auto train_start = Clock::now();
  model::HstfModel model(cfg);
  auto encode = [&](std::size_t i) { return features::encode_flow(flows[i], cfg.packet_size, cfg.flow_size); };
  // Encoded matrices are large; fit statistics in one pass and keep only model inputs.
  for (std::size_t i : split.train) model.stats.observe(encode(i));
  std::vector<model::FlowInput> train_in, test_in;
  train_in.reserve(split.train.size());
  for (std::size_t i : split.train) train_in.push_back(model::make_flow_input(encode(i), model));
  const double prep_seconds = seconds_since(train_start);

  const auto test_prep_start = Clock::now();
  test_in.reserve(split.test.size());
  for (std::size_t i : split.test) test_in.push_back(model::make_flow_input(encode(i), model));
  const double test_prep_seconds = seconds_since(test_prep_start);

  const std::span<const model::FlowInput> monitor =
      settings.track_epochs ? std::span<const model::FlowInput>(test_in) : std::span<const model::FlowInput>();
  rec.history = model::train_inputs(model, train_in, monitor, [&](const model::EpochRecord& e) {
    std::string line = "seed " + std::to_string(seed) + " epoch " + std::to_string(e.epoch) +
                       " loss " + format_decimal(e.train_loss) + " train_f1 " + format_decimal(e.training.f1);
    if (e.validated) line += " test_recall " + format_decimal(e.validation.recall);
    log(settings, line + " (" + format_decimal(e.seconds) + "s)");
  });
  rec.train_seconds = prep_seconds;
  for (const auto& e : rec.history.epochs) rec.train_seconds += e.seconds;

  const auto test_start = Clock::now();
  rec.metrics = model::evaluate(model, test_in, settings.threshold);
  rec.test_seconds = test_prep_seconds + seconds_since(test_start);
  log(settings, "seed " + std::to_string(seed) + " test P " + format_decimal(rec.metrics.precision) + " R " +
                    format_decimal(rec.metrics.recall) + " F1 " + format_decimal(rec.metrics.f1));
  return FittedRun{std::move(rec), std::move(model), std::move(split)};
}

RunRecord run_once(std::span<const http::Flow> flows, const RunSettings& settings, std::uint64_t seed) {
  return fit_split(flows, settings, seed).record;
}

RunSummary run_repeated(std::span<const http::Flow> flows, const RunSettings& settings) {
  if (settings.repeats == 0) throw Error(Errc::InvalidArgument, "repeats must be at least 1");
  std::vector<RunRecord> runs;
  for (std::size_t r = 0; r < settings.repeats; ++r) runs.push_back(run_once(flows, settings, settings.config.seed + r));
  return summarize(std::move(runs));
}

AblationResult run_ablation(std::span<const http::Flow> flows, const RunSettings& settings) {
  AblationResult out;
  RunSettings on = settings;
  on.config.statistics_gate = 1.0;
  RunSettings off = settings;
  off.config.statistics_gate = 0.0;
  log(settings, "ablation: statistics enabled");
  out.with_statistics = run_repeated(flows, on);
  log(settings, "ablation: statistics disabled");
  out.without_statistics = run_repeated(flows, off);
  return out;
}

SweepAxis parse_axis(std::string_view text) {
  if (text == "packet_size" || text == "packet-size") return SweepAxis::PacketSize;
  if (text == "flow_size" || text == "flow-size") return SweepAxis::FlowSize;
  throw Error(Errc::InvalidArgument, "sweep axis must be packet_size or flow_size");
}

std::string_view to_string(SweepAxis axis) noexcept {
  return axis == SweepAxis::PacketSize ? "packet_size" : "flow_size";
}

std::vector<SweepPoint> run_sweep(std::span<const http::Flow> flows, SweepAxis axis, std::span<const std::size_t> values,
                                  const RunSettings& settings) {
  if (values.empty()) throw Error(Errc::InvalidArgument, "sweep needs at least one value");
  std::vector<SweepPoint> points;
  for (std::size_t v : values) {
    RunSettings s = settings;
    (axis == SweepAxis::PacketSize ? s.config.packet_size : s.config.flow_size) = v;
    s.config.validate();
    log(settings, std::string(to_string(axis)) + " = " + std::to_string(v));
    points.push_back({v, run_repeated(flows, s)});
  }
  return points;
}

std::vector<ImbalancePoint> run_imbalance(std::span<const http::Flow> flows, std::span<const ProportionSpec> specs,
                                          const RunSettings& settings) {
  if (specs.empty()) throw Error(Errc::InvalidArgument, "imbalance study needs at least one proportion");
  // Check every ratio up front so a large study does not fail halfway.
  std::vector<http::Label> labels;
  for (const auto& f : flows) labels.push_back(f.label);
  for (const auto& spec : specs) make_split(labels, spec, settings.config.seed, settings.split);

  std::vector<ImbalancePoint> points;
  for (const auto& spec : specs) {
    RunSettings s = settings;
    s.proportion = spec;
    s.track_epochs = true;
    log(settings, "proportion " + spec.to_string());
    ImbalancePoint p{spec, run_repeated(flows, s), {}};
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    for (const auto& run : p.summary.runs) {
      for (const auto& e : run.history.epochs) {
        if (sums.size() < e.epoch) {
          sums.resize(e.epoch, 0.0);
          counts.resize(e.epoch, 0);
        }
        sums[e.epoch - 1] += e.validation.recall;
        ++counts[e.epoch - 1];
      }
    }
    for (std::size_t i = 0; i < sums.size(); ++i) p.recall_curve.push_back(sums[i] / static_cast<double>(counts[i]));
    points.push_back(std::move(p));
  }
  return points;
}

std::string format_decimal(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

MetricsRow to_row(std::string key, const RunSummary& summary) {
  return {std::move(key), summary.precision, summary.recall, summary.f1, summary.train_seconds, summary.test_seconds};
}

void write_metrics_csv(std::ostream& out, std::string_view key_name, std::span<const MetricsRow> rows) {
  out << key_name << ",P,R,F1,train_time_s,test_time_s\n";
  for (const auto& r : rows) {
    out << r.key << ',' << format_decimal(r.precision) << ',' << format_decimal(r.recall) << ','
        << format_decimal(r.f1) << ',' << format_decimal(r.train_seconds) << ',' << format_decimal(r.test_seconds)
        << '\n';
  }
}

void write_curves_csv(std::ostream& out, std::span<const ImbalancePoint> points) {
  out << "proportion,epoch,recall\n";
  for (const auto& p : points) {
    for (std::size_t e = 0; e < p.recall_curve.size(); ++e) {
      out << p.proportion.to_string() << ',' << e + 1 << ',' << format_decimal(p.recall_curve[e]) << '\n';
    }
  }
}

void write_history_csv(std::ostream& out, const model::TrainHistory& history) {
  out << "epoch,train_loss,P,R,F1,seconds\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_decimal(e.train_loss) << ',';
    if (e.validated) {
      out << format_decimal(e.validation.precision) << ',' << format_decimal(e.validation.recall) << ','
          << format_decimal(e.validation.f1);
    } else {
      out << ",,";
    }
    out << ',' << format_decimal(e.seconds) << '\n';
  }
}

}  // namespace hstf::experiments
