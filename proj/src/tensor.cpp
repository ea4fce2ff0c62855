// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/tensor.hpp"

#include <cstring>
#include <functional>
#include <numeric>

#include "attribank/errors.hpp"

namespace attribank {

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor: shape must have at least one extent");
  for (std::size_t e : shape)
    if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
  check_shape(shape_);
  values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  check_shape(shape_);
  if (values_.size() != shape_numel(shape_))
    throw ShapeError("tensor: " + std::to_string(values_.size()) + " values for shape " +
                     shape_str(shape_));
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape_));
  return values_[0];
}

std::span<double> Tensor::slice(std::size_t i) {
  const std::size_t stride = values_.size() / shape_.at(0);
  if (i >= shape_[0]) throw ShapeError("tensor: slice index out of range");
  return std::span<double>(values_).subspan(i * stride, stride);
}

std::span<const double> Tensor::slice(std::size_t i) const {
  const std::size_t stride = values_.size() / shape_.at(0);
  if (i >= shape_[0]) throw ShapeError("tensor: slice index out of range");
  return std::span<const double>(values_).subspan(i * stride, stride);
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (!on) grad_.reset();
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw Error("tensor: gradient not populated");
  return *grad_;
}

std::span<double> Tensor::grad_mut() {
  if (!grad_) throw Error("tensor: gradient not populated");
  return *grad_;
}

void Tensor::zero_grad() {
  if (requires_grad_) grad_.emplace(values_.size(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (!requires_grad_) return;
  if (g.size() != values_.size()) throw ShapeError("tensor: gradient size mismatch");
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) (*grad_)[i] += g[i];
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) noexcept {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace attribank
