/**
 * The hybrid flow classifier.
 *
 * Each packet slot runs through a shared CNN over its byte matrix
 * (conv+ReLU, max pool per stage, then a ReLU dense layer) and, in parallel,
 * a two-layer encoder over its packet-level statistics. The two are
 * concatenated into one embedding per slot. An LSTM reads the flow_size
 * embeddings from a zero state; its final hidden state is concatenated with
 * the encoded flow-level statistics and passed to the head, whose single
 * output is the malicious logit.
 *
 * The statistics gate scales the packet-level and flow-level encoder
 * outputs before concatenation. At 0 neither statistics vector is read.
 */

#ifndef HSTF_MODEL_HPP
#define HSTF_MODEL_HPP

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hstf/features.hpp"
#include "hstf/http.hpp"
#include "hstf/metrics.hpp"
#include "hstf/nn/feature_map.hpp"
#include "hstf/nn/gradcheck.hpp"
#include "hstf/nn/layers.hpp"
#include "hstf/nn/lstm.hpp"
#include "hstf/nn/optim.hpp"

namespace hstf::model {

/** One convolution (ReLU, stride 1) followed by non-overlapping max pooling. */
struct ConvStage {
  std::size_t kernels = 32;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 7;
  std::size_t pool_h = 2;
  std::size_t pool_w = 2;

  bool operator==(const ConvStage&) const = default;
};

/** Parses "KxHxW" or "KxHxW/PHxPW" (pool defaults to 2x2), comma separated. */
std::vector<ConvStage> parse_conv_stages(std::string_view text);
std::string format_conv_stages(std::span<const ConvStage> stages);

struct HstfConfig {
  std::size_t packet_size = features::kDefaultPacketSize;
  std::size_t flow_size = features::kDefaultFlowSize;
  std::size_t matrix_rows = features::kRawRows;
  std::size_t matrix_cols = features::kRawCols;
  std::vector<ConvStage> conv = {{32, 3, 7, 2, 2}, {64, 3, 5, 2, 2}};
  std::size_t cnn_dense = 128;
  std::size_t pl_encoder_out = 20;
  std::size_t pl_dense = 5;
  std::size_t lstm_hidden = 128;
  std::size_t fl_encoder_out = 30;
  std::vector<std::size_t> head_layers = {64};
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double statistics_gate = 1.0;
  /// Stop once the epoch's running training F1 reaches this value; 0 disables early stopping.
  double early_stop_f1 = 0.0;

  std::size_t embedding_width() const noexcept { return cnn_dense + pl_dense; }
  std::size_t head_input_width() const noexcept { return lstm_hidden + fl_encoder_out; }

  /** Throws InvalidArgument on out-of-range values. */
  void validate() const;

  bool operator==(const HstfConfig&) const = default;
};

std::string config_to_json(const HstfConfig& config);
/** Keys present in `text` override `base`; unknown keys are rejected with InvalidArgument. */
HstfConfig config_from_json(std::string_view text, const HstfConfig& base = {});

struct HstfParams {
  std::vector<nn::ConvLayer> conv;
  nn::DenseLayer cnn_dense;
  nn::DenseLayer pl_encoder;
  nn::DenseLayer pl_dense;
  nn::LstmCell lstm;
  nn::DenseLayer fl_encoder;
  std::vector<nn::DenseLayer> head;  // ReLU hidden layers, then one identity unit (the logit)

  /** Every weight and bias tensor in a fixed order. */
  std::vector<std::pair<std::string, nn::Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const nn::Tensor*>> named_tensors() const;
  HstfParams zeros_like() const;

  bool operator==(const HstfParams&) const = default;
};

class HstfModel {
 public:
  /** Builds the layer stack, checks the width chain and draws initial weights from config.seed. */
  explicit HstfModel(HstfConfig config);

  const HstfConfig& config() const noexcept { return config_; }
  std::span<const nn::PoolSpec> pools() const noexcept { return pools_; }
  /** Flattened CNN output width feeding the CNN dense layer. */
  std::size_t cnn_flat_width() const noexcept { return cnn_flat_width_; }

  HstfParams params;
  features::NormalizationStats stats;

  /** Count of forward passes that read PL or FL values (instrumentation for the gate). */
  std::size_t statistics_reads() const noexcept { return statistics_reads_; }
  void note_statistics_read() const noexcept { ++statistics_reads_; }

 private:
  HstfConfig config_;
  std::vector<nn::PoolSpec> pools_;
  std::size_t cnn_flat_width_ = 0;
  mutable std::size_t statistics_reads_ = 0;
};

struct PacketInput {
  /// Explicit top-left block of the packet matrix; the rest is zero. Empty for a zero matrix.
  nn::Tensor block;
  std::vector<double> pl;  // packet-level statistics, normalized
};

struct FlowInput {
  std::vector<PacketInput> packets;  // exactly flow_size slots
  std::vector<double> fl;            // flow-level statistics, normalized
  double target = 0.0;               // 1 for malicious
};

/** Keeps the smallest top-left block of `image` that holds all its non-zero values. */
PacketInput make_packet_input(const nn::Tensor& image, std::vector<double> pl);

/** Normalizes with the model's statistics. Throws ConfigMismatch on shape disagreement. */
FlowInput make_flow_input(const features::EncodedFlow& encoded, const HstfModel& model);

/** Packet embedding of width cnn_dense + pl_dense. */
nn::Tensor packet_branch(const HstfModel& model, const PacketInput& packet);

/** Malicious score in [0,1]. */
double flow_forward(const HstfModel& model, const FlowInput& flow);

/** Scores in input order, evaluated in batches. */
std::vector<double> predict_scores(const HstfModel& model, std::span<const FlowInput> flows,
                                   std::size_t batch_size = 64);

/**
 * Mean binary cross-entropy over the batch; gradients of that mean are added
 * to `grad` (shaped like model.params). Per-flow scores go to `scores` when given.
 */
double loss_and_gradient(const HstfModel& model, std::span<const FlowInput* const> batch, HstfParams& grad,
                         std::vector<double>* scores = nullptr);

/** Mean loss plus the piecewise-linear region it lies in (for finite-difference checks). */
nn::Evaluation evaluate_loss(const HstfModel& model, std::span<const FlowInput* const> batch);

/**
 * Central-difference check of every parameter of `model` against the
 * analytic gradient of the mean batch loss.
 */
nn::GradCheckReport gradient_check(HstfModel& model, std::span<const FlowInput> batch,
                                   const nn::GradCheckOptions& options = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  /// Predictions made during the epoch's own forward passes (weights still moving).
  experiments::Metrics training;
  bool validated = false;
  experiments::Metrics validation;
  double seconds = 0.0;  // training only, validation excluded
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
};

struct TrainResult {
  HstfModel model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Fits normalization statistics on `train_set`, then trains with mini-batch
 * BCE. Validation metrics, when a validation set is given, use threshold 0.5.
 * Throws SingleClassDataset unless both labels are present, InvalidArgument
 * for unlabeled flows.
 */
TrainResult train(std::span<const features::EncodedFlow> train_set, const HstfConfig& config,
                  std::span<const features::EncodedFlow> validation = {}, const EpochCallback& on_epoch = {});

/** Training on prepared inputs with a model whose statistics are already set. */
TrainHistory train_inputs(HstfModel& model, std::span<const FlowInput> train_set,
                          std::span<const FlowInput> validation = {}, const EpochCallback& on_epoch = {});

experiments::Metrics evaluate(const HstfModel& model, std::span<const FlowInput> flows, double threshold = 0.5);

struct Prediction {
  http::Label label = http::Label::Benign;
  double score = 0.0;
};

/** Encodes with the model's config and statistics; Malicious when score >= threshold. */
Prediction predict(const http::Flow& flow, const HstfModel& model, double threshold = 0.5);

constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const HstfModel& model, const std::string& path);
/** Throws Io, VersionMismatch or CorruptFile. */
HstfModel load_model(const std::string& path);

}  // namespace hstf::model

#endif  // HSTF_MODEL_HPP
