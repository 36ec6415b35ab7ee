#include "hstf/metrics.hpp"

#include <string>

#include "hstf/error.hpp"

namespace hstf::experiments {

FScore f_beta(double precision, double recall, double beta) {
  if (!(precision >= 0.0 && precision <= 1.0) || !(recall >= 0.0 && recall <= 1.0)) {
    throw Error(Errc::InvalidArgument, "precision and recall must lie in [0,1]");
  }
  if (!(beta > 0.0)) throw Error(Errc::InvalidArgument, "beta must be positive");
  if (precision == 0.0 && recall == 0.0) return {0.0, true};
  const double b2 = beta * beta;
  return {(1.0 + b2) * precision * recall / (b2 * precision + recall), false};
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const FScore f = f_beta(m.precision, m.recall, 1.0);
  m.f1 = f.value;
  m.f1_undefined = f.undefined;
  return m;
}

Metrics compute_metrics(std::span<const http::Label> predictions, std::span<const http::Label> labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw Error(Errc::LengthMismatch, "predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                                          std::to_string(labels.size()) + ") must be equal, non-zero lengths");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = predictions[i] == http::Label::Malicious;
    const bool actual = labels[i] == http::Label::Malicious;
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
  return metrics_from_counts(tp, fp, tn, fn);
}

}  // namespace hstf::experiments
