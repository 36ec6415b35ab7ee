#ifndef HSTF_NN_TENSOR_HPP
#define HSTF_NN_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hstf::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/** Dense row-major array of doubles. A default-constructed tensor is empty (rank 0, no values). */
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double& at(std::size_t i, std::size_t j) noexcept { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const noexcept { return values_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /** Same values under a new shape of equal size; throws ShapeMismatch otherwise. */
  Tensor reshaped(Shape shape) const;
  void fill(double value) noexcept;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/** Max |a-b| over aligned tensors; throws ShapeMismatch on differing shapes. */
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace hstf::nn

#endif  // HSTF_NN_TENSOR_HPP
