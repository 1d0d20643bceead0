#include "oct1d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace oct1d {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::DegenerateLength: return "degenerate length";
    case ErrorKind::LabelRange: return "label out of range";
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Runtime: return "runtime error";
  }
  return "error";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) fail(ErrorKind::Dimension, "tensor shape must have rank >= 1");
  for (auto d : shape)
    if (d == 0)
      fail(ErrorKind::Dimension, "tensor extents must be positive, got " + shape_str(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size())
    fail(ErrorKind::Dimension, "data length " + std::to_string(data_.size()) +
                                   " does not match shape " + shape_str(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    fail(ErrorKind::Dimension, "axis " + std::to_string(axis) + " out of range for " +
                                   shape_str(shape_));
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    fail(ErrorKind::Dimension, std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                   " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    fail(ErrorKind::Dimension, std::string(what) + ": expected rank " + std::to_string(rank) +
                                   ", got " + shape_str(t.shape()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oct1d
