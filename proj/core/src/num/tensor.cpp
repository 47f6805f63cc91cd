#include "rbw/num/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rbw::num {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimension of size zero in " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor() : Tensor(Shape{1, 1}, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (values_.size() != shape_size(shape_)) {
    throw DimensionError("tensor of shape " + to_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + to_string(shape_));
  return shape_[1];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  const auto c = cols();
  return std::span<const double>(values_).subspan(r * c, c);
}

void Tensor::set_grad(std::vector<double> g) {
  if (g.size() != values_.size()) {
    throw DimensionError("gradient length " + std::to_string(g.size()) +
                         " does not match tensor " + to_string(shape_));
  }
  grad_ = std::move(g);
}

Tensor Tensor::transposed() const {
  const auto r = rows(), c = cols();
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

double Tensor::max_abs() const noexcept {
  double m = 0.0;
  for (double x : values_) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cannot compare " + to_string(a.shape()) + " with " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace rbw::num
