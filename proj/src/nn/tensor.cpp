#include "hstf/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hstf/error.hpp"

namespace hstf::nn {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw Error(Errc::ShapeMismatch, "tensor dimension must be >= 1");
  }
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : Tensor(std::move(shape)) {
  if (values.size() != values_.size()) {
    throw Error(Errc::ShapeMismatch, "value count " + std::to_string(values.size()) + " does not fill " +
                                         shape_string(shape_));
  }
  values_ = std::move(values);
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw Error(Errc::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = values_;
  return t;
}

void Tensor::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace hstf::nn
