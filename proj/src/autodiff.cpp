// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attribank/errors.hpp"

namespace attribank::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool is_scalar(const Tensor& t) { return t.numel() == 1 && t.rank() == 1; }

}  // namespace

const Tape::Node& Tape::node(Var v, const char* op) const {
  if (!v.valid() || v.id >= nodes_.size()) shape_fail(op, "variable is not on this tape");
  return nodes_[v.id];
}

Var Tape::push(Tensor value, bool tracks, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.tracks = tracks;
  if (tracks) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

std::vector<double>& Tape::grad_buf(std::size_t id) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(nodes_[id].value.numel(), 0.0);
  return g;
}

Var Tape::parameter(Tensor& t) {
  Node n;
  n.value = Tensor(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  n.param = &t;
  n.tracks = t.requires_grad();
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor t) {
  t.set_requires_grad(false);
  return push(std::move(t), false, nullptr);
}

Var Tape::constant(Shape shape, std::span<const double> values) {
  return push(Tensor(std::move(shape), std::vector<double>(values.begin(), values.end())), false, nullptr);
}

const Tensor& Tape::value(Var v) const { return node(v, "value").value; }

bool Tape::tracks(Var v) const { return node(v, "tracks").tracks; }

std::vector<double> Tape::grad(Var v) const {
  const Node& n = node(v, "grad");
  if (n.grad.empty()) return std::vector<double>(n.value.numel(), 0.0);
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = node(a, "matmul").value;
  const Tensor& B = node(b, "matmul").value;
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    shape_fail("matmul", "cannot multiply " + shape_str(A.shape()) + " by " + shape_str(B.shape()));
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  const bool tr = tracks(a) || tracks(b);
  return push(std::move(out), tr, [a, b, m, k, n](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    if (t.tracks(a)) {
      const Tensor& B = t.nodes_[b.id].value;
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.tracks(b)) {
      const Tensor& A = t.nodes_[a.id].value;
      auto& gb = t.grad_buf(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Var Tape::transpose(Var a) {
  const Tensor& A = node(a, "transpose").value;
  if (A.rank() != 2) shape_fail("transpose", "expects rank 2, got " + shape_str(A.shape()));
  const std::size_t r = A.dim(0), c = A.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  return push(std::move(out), tracks(a), [a, r, c](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = node(a, "add").value;
  const Tensor& B = node(b, "add").value;
  const bool bcast = A.shape() != B.shape();
  if (bcast && !is_scalar(B))
    shape_fail("add", "shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bcast ? B[0] : B[i];
  return push(std::move(out), tracks(a) || tracks(b), [a, b, bcast](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    if (t.tracks(a)) {
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.tracks(b)) {
      auto& gb = t.grad_buf(b.id);
      if (bcast) {
        double s = 0.0;
        for (double v : g) s += v;
        gb[0] += s;
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = node(a, "sub").value;
  const Tensor& B = node(b, "sub").value;
  const bool bcast = A.shape() != B.shape();
  if (bcast && !is_scalar(B))
    shape_fail("sub", "shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bcast ? B[0] : B[i];
  return push(std::move(out), tracks(a) || tracks(b), [a, b, bcast](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    if (t.tracks(a)) {
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.tracks(b)) {
      auto& gb = t.grad_buf(b.id);
      if (bcast) {
        double s = 0.0;
        for (double v : g) s += v;
        gb[0] -= s;
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = node(a, "mul").value;
  const Tensor& B = node(b, "mul").value;
  const bool bcast = A.shape() != B.shape();
  if (bcast && !is_scalar(B))
    shape_fail("mul", "shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bcast ? B[0] : B[i];
  return push(std::move(out), tracks(a) || tracks(b), [a, b, bcast](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const Tensor& A = t.nodes_[a.id].value;
    const Tensor& B = t.nodes_[b.id].value;
    if (t.tracks(a)) {
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (bcast ? B[0] : B[i]);
    }
    if (t.tracks(b)) {
      auto& gb = t.grad_buf(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bcast ? 0 : i] += g[i] * A[i];
    }
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out = node(a, "scale").value;
  for (double& v : out.values()) v *= s;
  return push(std::move(out), tracks(a), [a, s](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& first = node(parts[0], "concat").value.shape();
  const Shape trailing(first.begin() + 1, first.end());
  std::size_t rows = 0;
  bool tr = false;
  for (Var p : parts) {
    const Shape& s = node(p, "concat").value.shape();
    if (Shape(s.begin() + 1, s.end()) != trailing)
      shape_fail("concat", "trailing extents differ: " + shape_str(first) + " vs " + shape_str(s));
    rows += s[0];
    tr = tr || tracks(p);
  }
  Shape out_shape = first;
  out_shape[0] = rows;
  std::vector<double> vals;
  vals.reserve(shape_numel(out_shape));
  for (Var p : parts) {
    auto v = nodes_[p.id].value.values();
    vals.insert(vals.end(), v.begin(), v.end());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(Tensor(std::move(out_shape), std::move(vals)), tr, [ps](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    std::size_t off = 0;
    for (Var p : ps) {
      const std::size_t n = t.nodes_[p.id].value.numel();
      if (t.tracks(p)) {
        auto& gp = t.grad_buf(p.id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var Tape::select(Var a, std::size_t i) {
  const Tensor& A = node(a, "select").value;
  if (i >= A.dim(0))
    shape_fail("select", "index " + std::to_string(i) + " out of range for " + shape_str(A.shape()));
  Shape s = A.rank() == 1 ? Shape{1} : Shape(A.shape().begin() + 1, A.shape().end());
  auto sl = A.slice(i);
  const std::size_t off = i * sl.size();
  return push(Tensor(std::move(s), std::vector<double>(sl.begin(), sl.end())), tracks(a),
              [a, off](Tape& t, std::size_t self) {
                const auto& g = t.out_grad(self);
                auto& ga = t.grad_buf(a.id);
                for (std::size_t k = 0; k < g.size(); ++k) ga[off + k] += g[k];
              });
}

Var Tape::reshape(Var a, Shape shape) {
  const Tensor& A = node(a, "reshape").value;
  if (shape_numel(shape) != A.numel())
    shape_fail("reshape", "cannot view " + shape_str(A.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), std::vector<double>(A.values().begin(), A.values().end()));
  return push(std::move(out), tracks(a), [a](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::l2_normalize(Var a) {
  const Tensor& A = node(a, "l2_normalize").value;
  const double n = std::sqrt(dot(A.values(), A.values()) + kNormEpsilon);
  Tensor out = A;
  for (double& v : out.values()) v /= n;
  return push(std::move(out), tracks(a), [a, n](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const Tensor& A = t.nodes_[a.id].value;
    const double ag = dot(A.values(), g);
    const double n3 = n * n * n;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / n - A[i] * ag / n3;
  });
}

Var Tape::cosine_sim(Var a, Var b) {
  const Tensor& A = node(a, "cosine_sim").value;
  const Tensor& B = node(b, "cosine_sim").value;
  if (A.numel() != B.numel())
    shape_fail("cosine_sim", "length mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  const double ab = dot(A.values(), B.values());
  const double na = std::sqrt(dot(A.values(), A.values()) + kNormEpsilon);
  const double nb = std::sqrt(dot(B.values(), B.values()) + kNormEpsilon);
  const double c = ab / (na * nb);
  return push(Tensor::scalar(c), tracks(a) || tracks(b), [a, b, ab, na, nb](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    const Tensor& A = t.nodes_[a.id].value;
    const Tensor& B = t.nodes_[b.id].value;
    if (t.tracks(a)) {
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga[i] += g * (B[i] / (na * nb) - ab * A[i] / (na * na * na * nb));
    }
    if (t.tracks(b)) {
      auto& gb = t.grad_buf(b.id);
      for (std::size_t i = 0; i < gb.size(); ++i)
        gb[i] += g * (A[i] / (na * nb) - ab * B[i] / (nb * nb * nb * na));
    }
  });
}

Var Tape::softmax_logits(Var a) {
  const Tensor& A = node(a, "softmax_logits").value;
  if (A.rank() > 2) shape_fail("softmax_logits", "expects rank 1 or 2, got " + shape_str(A.shape()));
  const std::size_t cols = A.rank() == 1 ? A.dim(0) : A.dim(1);
  const std::size_t rows = A.numel() / cols;
  Tensor out = A;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.values().subspan(r * cols, cols);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v - mx));
    for (double& v : row) v /= z;
  }
  return push(std::move(out), tracks(a), [a, rows, cols](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const Tensor& Y = t.nodes_[self].value;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      double gy = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gy += g[r * cols + j] * Y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += Y[r * cols + j] * (g[r * cols + j] - gy);
    }
  });
}

Var Tape::neg_log_prob(Var logits, std::size_t label) {
  const Tensor& L = node(logits, "neg_log_prob").value;
  if (L.rank() != 1) shape_fail("neg_log_prob", "expects rank-1 logits, got " + shape_str(L.shape()));
  if (label >= L.numel())
    shape_fail("neg_log_prob", "label " + std::to_string(label) + " outside " + shape_str(L.shape()));
  const double mx = *std::max_element(L.values().begin(), L.values().end());
  double z = 0.0;
  for (double v : L.values()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return push(Tensor::scalar(lse - L[label]), tracks(logits), [logits, label, mx, z](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    const Tensor& L = t.nodes_[logits.id].value;
    auto& gl = t.grad_buf(logits.id);
    for (std::size_t i = 0; i < gl.size(); ++i) {
      const double p = std::exp(L[i] - mx) / z;
      gl[i] += g * (p - (i == label ? 1.0 : 0.0));
    }
  });
}

Var Tape::abs(Var a) {
  Tensor out = node(a, "abs").value;
  for (double& v : out.values()) v = std::fabs(v);
  return push(std::move(out), tracks(a), [a](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const Tensor& A = t.nodes_[a.id].value;
    auto& ga = t.grad_buf(a.id);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += A[i] > 0 ? g[i] : (A[i] < 0 ? -g[i] : 0.0);
  });
}

Var Tape::relu(Var a) {
  Tensor out = node(a, "relu").value;
  for (double& v : out.values()) v = v > 0 ? v : 0.0;
  return push(std::move(out), tracks(a), [a](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const Tensor& A = t.nodes_[a.id].value;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0) ga[i] += g[i];
  });
}

Var Tape::sum(Var a) {
  const Tensor& A = node(a, "sum").value;
  double s = 0.0;
  for (double v : A.values()) s += v;
  return push(Tensor::scalar(s), tracks(a), [a](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    for (double& v : t.grad_buf(a.id)) v += g;
  });
}

Var Tape::mean(Var a) {
  const Tensor& A = node(a, "mean").value;
  double s = 0.0;
  for (double v : A.values()) s += v;
  const double n = static_cast<double>(A.numel());
  return push(Tensor::scalar(s / n), tracks(a), [a, n](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0] / n;
    for (double& v : t.grad_buf(a.id)) v += g;
  });
}

Var Tape::mean_rows(Var a) {
  const Tensor& A = node(a, "mean_rows").value;
  if (A.rank() != 2) shape_fail("mean_rows", "expects rank 2, got " + shape_str(A.shape()));
  const std::size_t r = A.dim(0), c = A.dim(1);
  Tensor out({c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += A[i * c + j];
  for (double& v : out.values()) v /= static_cast<double>(r);
  return push(std::move(out), tracks(a), [a, r, c](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_buf(a.id);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j] * inv;
  });
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss, "backward");
  if (ln.value.numel() != 1)
    shape_fail("backward", "loss must be scalar, got shape " + shape_str(ln.value.shape()));
  for (Node& n : nodes_) n.grad.clear();
  for (Node& n : nodes_)
    if (n.param && n.param->requires_grad() && !n.param->has_grad()) n.param->zero_grad();
  if (!ln.tracks) return;
  grad_buf(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.tracks) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) n.param->accumulate_grad(n.grad);
  }
}

GradCheckReport compare_with_central_differences(std::span<const double> analytic,
                                                 const std::function<double(const Tensor&)>& evaluate,
                                                 const Tensor& at, double h) {
  if (!(h > 0)) throw ConfigError("finite_difference_check: step h must be positive");
  if (analytic.size() != at.numel()) throw ShapeError("finite_difference_check: gradient size mismatch");
  GradCheckReport rep;
  Tensor probe = at;
  for (std::size_t i = 0; i < at.numel(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    const double fp = evaluate(probe);
    probe[i] = x0 - h;
    const double fm = evaluate(probe);
    probe[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_check: non-finite function value at coordinate " + std::to_string(i));
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
    if (!std::isfinite(analytic[i]))
      throw NumericError("finite_difference_check: non-finite analytic gradient at coordinate " + std::to_string(i));
    if (i == 0 || err > rep.max_rel_error) rep = {err, i, analytic[i], numeric};
  }
  return rep;
}

GradCheckReport finite_difference_check(const TapeFn& f, const Tensor& at, double h) {
  Tensor leaf(at.shape(), std::vector<double>(at.values().begin(), at.values().end()), true);
  std::vector<double> analytic;
  {
    Tape tape;
    Var out = f(tape, tape.parameter(leaf));
    if (!std::isfinite(tape.value(out).item())) throw NumericError("finite_difference_check: non-finite output");
    tape.backward(out);
    analytic.assign(leaf.grad().begin(), leaf.grad().end());
  }
  auto evaluate = [&f](const Tensor& x) {
    Tape tape;
    return tape.value(f(tape, tape.constant(x))).item();
  };
  return compare_with_central_differences(analytic, evaluate, at, h);
}

}  // namespace attribank::ad
