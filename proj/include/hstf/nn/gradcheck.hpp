#ifndef HSTF_NN_GRADCHECK_HPP
#define HSTF_NN_GRADCHECK_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hstf/nn/tensor.hpp"

namespace hstf::nn {

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;  // analytic gradient at the current value
};

/**
 * Loss at the current parameter values plus a signature of the piecewise
 * region it was evaluated in (ReLU on/off pattern, max-pool winners). Smooth
 * functions can leave the signature at 0.
 */
struct Evaluation {
  double loss = 0.0;
  std::uint64_t region = 0;
};

using LossFunction = std::function<Evaluation()>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so exact zeros compare absolutely.
  double scale_floor = 1e-6;
  /// Check at most this many entries per tensor (evenly strided); 0 checks all.
  std::size_t max_entries_per_tensor = 0;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // the +/- epsilon probes straddled a non-differentiable point
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  bool passed = false;
};

/** |a - n| / max(|a|, |n|, floor). */
double relative_error(double analytic, double numeric, double floor) noexcept;

/**
 * Compares each analytic gradient entry with the central difference
 * (L(p+eps) - L(p-eps)) / 2eps. Parameters are restored after probing.
 */
GradCheckReport finite_diff_check(std::span<const ParamRef> params, const LossFunction& loss,
                                  const GradCheckOptions& options = {});

}  // namespace hstf::nn

#endif  // HSTF_NN_GRADCHECK_HPP
