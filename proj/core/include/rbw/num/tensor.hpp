#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rbw::num {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for out-of-domain scalar arguments (temperature <= 0, h <= 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Every dimension is strictly positive and the value buffer always holds
/// exactly product(shape) entries. The gradient buffer, when present, has
/// the same length as the values.
class Tensor {
 public:
  /// A 1x1 zero.
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1, 1}, v); }
  static Tensor identity(std::size_t n);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::span<const double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  // Rank-2 accessors. A rank-1 tensor is viewed as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> row_span(std::size_t r) const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

  const std::optional<std::vector<double>>& grad() const noexcept { return grad_; }
  void set_grad(std::vector<double> g);
  void clear_grad() noexcept { grad_.reset(); }

  Tensor transposed() const;
  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;
  double max_abs() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

/// Max absolute entrywise difference; throws DimensionError on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace rbw::num
