// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ecgcloud::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("tensor needs at least one dimension");
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_string(shape_));
  }
  data_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : Tensor(std::move(shape)) {
  if (data.size() != data_.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape_));
  }
  data_ = std::move(data);
}

Tensor Tensor::filled(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

}  // namespace ecgcloud::nn
