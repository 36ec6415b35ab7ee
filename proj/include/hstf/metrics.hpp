#ifndef HSTF_METRICS_HPP
#define HSTF_METRICS_HPP

#include <cstddef>
#include <span>

#include "hstf/http.hpp"

namespace hstf::experiments {

struct FScore {
  double value = 0.0;
  bool undefined = false;  // precision and recall both 0; value reported as 0
};

/** (1 + b^2) P R / (b^2 P + R). Throws InvalidArgument outside P,R in [0,1] or b <= 0. */
FScore f_beta(double precision, double recall, double beta = 1.0);

/** Confusion counts with Malicious as the positive class. */
struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive labels
  bool f1_undefined = false;

  bool operator==(const Metrics&) const = default;
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/** Throws LengthMismatch on differing or zero lengths. Unlabeled entries count as benign. */
Metrics compute_metrics(std::span<const http::Label> predictions, std::span<const http::Label> labels);

}  // namespace hstf::experiments

#endif  // HSTF_METRICS_HPP
