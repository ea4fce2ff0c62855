// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "attribank/tensor.hpp"

namespace attribank::ad {

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

/// Cosine-similarity and normalization guard, added under each square root.
inline constexpr double kNormEpsilon = 1e-12;

/// Append-only record of primitive applications for reverse-mode
/// differentiation.
///
/// Every primitive evaluates eagerly and appends a node holding its value.
/// A backward closure is attached only when some input tracks gradients, so
/// a tape built purely from constants is a plain forward evaluator.
/// Parameters are bound to caller-owned tensors; backward() accumulates into
/// their grad buffers. The bound tensors must outlive the tape.
///
/// Shapes are explicit. The only broadcast is a {1}-shaped right operand in
/// add/sub/mul.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Tensor& t);
  Var constant(Tensor t);
  Var constant(Shape shape, std::span<const double> values);

  const Tensor& value(Var v) const;
  bool tracks(Var v) const;
  /// Gradient of the last backward() target w.r.t. v (zeros when unreached).
  std::vector<double> grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// (m,k) x (k,n) -> (m,n)
  Var matmul(Var a, Var b);
  /// (m,n) -> (n,m)
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product.
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  /// Concatenation along axis 0; trailing extents must agree.
  Var concat(std::span<const Var> parts);
  /// Index i of axis 0. A rank-1 input yields shape {1}.
  Var select(Var a, std::size_t i);
  Var reshape(Var a, Shape shape);
  /// a / sqrt(|a|^2 + eps) over all elements.
  Var l2_normalize(Var a);
  /// <a,b> / (sqrt(|a|^2+eps) sqrt(|b|^2+eps)) -> {1}
  Var cosine_sim(Var a, Var b);
  /// Softmax of a rank-1 tensor, or of each row of a rank-2 tensor.
  Var softmax_logits(Var a);
  /// -log softmax(logits)[label] for rank-1 logits -> {1}
  Var neg_log_prob(Var logits, std::size_t label);
  Var abs(Var a);
  Var relu(Var a);
  Var sum(Var a);
  Var mean(Var a);
  /// (r,c) -> {c}, the average row.
  Var mean_rows(Var a);

  /// Reverse sweep from a {1}-shaped loss. Resets intermediate gradients
  /// first, so calling it twice replays identically. Every bound parameter
  /// that requires grad ends with an allocated grad buffer.
  void backward(Var loss);

 private:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;
  struct Node {
    Tensor value;
    Tensor* param = nullptr;
    bool tracks = false;
    BackwardFn backward;
    std::vector<double> grad;
  };

  const Node& node(Var v, const char* op) const;
  Var push(Tensor value, bool tracks, BackwardFn fn);
  std::vector<double>& grad_buf(std::size_t id);
  const std::vector<double>& out_grad(std::size_t self) const { return nodes_[self].grad; }

  std::deque<Node> nodes_;  // stable references across push_back
};

/// Result of comparing an analytic gradient against central differences.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Tensor -> scalar function built on a tape; the argument is the input leaf.
using TapeFn = std::function<Var(Tape&, Var)>;

/// max_i |analytic_i - fd_i| / max(1, |fd_i|) with fd the central difference
/// of `evaluate` at step h. Throws NumericError on non-finite evaluations.
GradCheckReport compare_with_central_differences(std::span<const double> analytic,
                                                 const std::function<double(const Tensor&)>& evaluate,
                                                 const Tensor& at, double h);

/// Full check for a tape function: analytic gradient via backward(), then
/// central differences over every coordinate of `at`.
GradCheckReport finite_difference_check(const TapeFn& f, const Tensor& at, double h);

}  // namespace attribank::ad
