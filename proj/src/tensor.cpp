// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "dbt/error.hpp"

namespace dbt {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  require(data_.size() == shape_numel(shape_), ErrorCode::kShapeMismatch,
          "tensor data size " + std::to_string(data_.size()) +
              " does not match shape " + shape_str(shape_));
}

std::size_t Tensor::dim(std::size_t i) const {
  require(i < shape_.size(), ErrorCode::kShapeMismatch,
          "dimension index out of range for shape " + shape_str(shape_));
  return shape_[i];
}

double& Tensor::at(std::size_t b, std::size_t c, std::size_t t,
                   std::size_t f) {
  return data_[((b * shape_[1] + c) * shape_[2] + t) * shape_[3] + f];
}

const double& Tensor::at(std::size_t b, std::size_t c, std::size_t t,
                  std::size_t f) const {
  return data_[((b * shape_[1] + c) * shape_[2] + t) * shape_[3] + f];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == data_.size(), ErrorCode::kShapeMismatch,
          "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(same_shape(a, b), ErrorCode::kShapeMismatch,
          "max_abs_diff: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dbt
