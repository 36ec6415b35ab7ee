/**
 * Evaluation protocol at desk scale: proportion-controlled 70/30 splits,
 * repeated seeded runs, the statistics ablation, packet/flow size sweeps and
 * the class-imbalance study, plus their CSV outputs.
 */

#ifndef HSTF_EXPERIMENTS_HPP
#define HSTF_EXPERIMENTS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/http.hpp"
#include "hstf/metrics.hpp"
#include "hstf/model.hpp"

namespace hstf::experiments {

/** Malicious:benign ratio of a training set. */
struct ProportionSpec {
  std::size_t malicious = 3;
  std::size_t benign = 10;

  /** Parses "M:B" with both parts at least 1; throws InvalidArgument otherwise. */
  static ProportionSpec parse(std::string_view text);
  std::string to_string() const;

  bool operator==(const ProportionSpec&) const = default;
};

struct SplitOptions {
  double train_malicious_fraction = 0.7;
  /// Test benign count is min(max_test_benign, test_benign_fraction * benign pool).
  double test_benign_fraction = 0.4;
  std::size_t max_test_benign = 50'000;
};

/** Indices into the dataset, each list in ascending order. */
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/**
 * Train: the malicious training fraction plus enough benign flows to meet
 * the ratio. Test: every remaining malicious flow plus a benign set disjoint
 * from train. Unlabeled entries are ignored. Throws SingleClassDataset when a
 * class is absent and InsufficientData when the pools cannot cover both sides.
 */
Split make_split(std::span<const http::Label> labels, const ProportionSpec& spec, std::uint64_t seed,
                 const SplitOptions& options = {});

using LogFn = std::function<void(const std::string&)>;

struct RunSettings {
  model::HstfConfig config;
  ProportionSpec proportion;
  SplitOptions split;
  /// Repeat r uses seed config.seed + r for both the split and the weights.
  std::size_t repeats = 3;
  double threshold = 0.5;
  /// Evaluate the test set after every epoch (needed for recall curves).
  bool track_epochs = false;
  LogFn log;
};

struct RunRecord {
  std::uint64_t seed = 0;
  Metrics metrics;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  model::TrainHistory history;
};

struct RunSummary {
  std::vector<RunRecord> runs;
  double precision = 0.0;  // means over runs
  double recall = 0.0;
  double f1 = 0.0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};

struct FittedRun {
  RunRecord record;
  model::HstfModel model;
  Split split;
};

/** One split-train-evaluate pass with the given seed, keeping the trained model. */
FittedRun fit_split(std::span<const http::Flow> flows, const RunSettings& settings, std::uint64_t seed);
/** fit_split without the model. */
RunRecord run_once(std::span<const http::Flow> flows, const RunSettings& settings, std::uint64_t seed);
/** settings.repeats passes, averaged. */
RunSummary run_repeated(std::span<const http::Flow> flows, const RunSettings& settings);

struct AblationResult {
  RunSummary with_statistics;
  RunSummary without_statistics;
};

/** Identical seeds and splits; the statistics gate is 1 for one arm and 0 for the other. */
AblationResult run_ablation(std::span<const http::Flow> flows, const RunSettings& settings);

enum class SweepAxis { PacketSize, FlowSize };
SweepAxis parse_axis(std::string_view text);
std::string_view to_string(SweepAxis axis) noexcept;

struct SweepPoint {
  std::size_t value = 0;
  RunSummary summary;
};

/** One repeated run per value with the other axis held at settings.config. Throws InvalidArgument on empty values. */
std::vector<SweepPoint> run_sweep(std::span<const http::Flow> flows, SweepAxis axis, std::span<const std::size_t> values,
                                  const RunSettings& settings);

struct ImbalancePoint {
  ProportionSpec proportion;
  RunSummary summary;
  /// Test recall after each epoch, averaged over repeats that reached that epoch.
  std::vector<double> recall_curve;
};

std::vector<ImbalancePoint> run_imbalance(std::span<const http::Flow> flows, std::span<const ProportionSpec> specs,
                                          const RunSettings& settings);

/** Fixed four-decimal rendering used by every CSV. */
std::string format_decimal(double value);

/** Header "<key_name>,P,R,F1,train_time_s,test_time_s", one row per entry. */
struct MetricsRow {
  std::string key;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};
MetricsRow to_row(std::string key, const RunSummary& summary);
void write_metrics_csv(std::ostream& out, std::string_view key_name, std::span<const MetricsRow> rows);

/** Header "proportion,epoch,recall", epochs counted from 1. */
void write_curves_csv(std::ostream& out, std::span<const ImbalancePoint> points);

/** Header "epoch,train_loss,P,R,F1,seconds"; validation columns are empty when not measured. */
void write_history_csv(std::ostream& out, const model::TrainHistory& history);

}  // namespace hstf::experiments

#endif  // HSTF_EXPERIMENTS_HPP
