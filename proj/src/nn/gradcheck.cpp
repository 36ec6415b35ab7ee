#include "hstf/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hstf::nn {

double relative_error(double analytic, double numeric, double floor) noexcept {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport finite_diff_check(std::span<const ParamRef> params, const LossFunction& loss,
                                  const GradCheckOptions& options) {
  GradCheckReport report;
  const std::uint64_t base_region = loss().region;
  for (const ParamRef& ref : params) {
    TensorCheck tc;
    tc.name = ref.name;
    const std::size_t n = ref.value->size();
    const std::size_t stride =
        options.max_entries_per_tensor == 0 || n <= options.max_entries_per_tensor
            ? 1
            : (n + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
    for (std::size_t j = 0; j < n; j += stride) {
      double& p = (*ref.value)[j];
      const double saved = p;
      p = saved + options.epsilon;
      const Evaluation plus = loss();
      p = saved - options.epsilon;
      const Evaluation minus = loss();
      p = saved;
      if (plus.region != base_region || minus.region != base_region) {
        ++tc.skipped_kinks;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * options.epsilon);
      const double err = relative_error((*ref.grad)[j], numeric, options.scale_floor);
      tc.max_relative_error = std::max(tc.max_relative_error, err);
      ++tc.checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, tc.max_relative_error);
    report.checked += tc.checked;
    report.skipped_kinks += tc.skipped_kinks;
    report.tensors.push_back(std::move(tc));
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace hstf::nn
