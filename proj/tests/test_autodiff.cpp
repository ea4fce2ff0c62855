// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "attribank/autodiff.hpp"
#include "attribank/errors.hpp"
#include "attribank/rng.hpp"
#include "attribank/tensor.hpp"
#include "oracles.hpp"

using namespace attribank;
using ad::Tape;
using ad::Var;

namespace {

Tensor random(Shape s, oracle::Gen& g, double scale = 1.0) {
  Tensor t(s);
  for (double& v : t.values()) v = scale * g.normal();
  return t;
}

// Analytic gradient of f at x via the tape, compared with the oracle's own
// central differences.
double max_gradient_error(const std::function<Var(Tape&, Var)>& f, const Tensor& x) {
  Tensor p(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  Tape tape;
  tape.backward(f(tape, tape.parameter(p)));
  const auto numeric = oracle::numeric_gradient(
      [&](const oracle::Vec& v) {
        Tape t;
        return t.value(f(t, t.constant(x.shape(), v))).item();
      },
      oracle::Vec(x.values().begin(), x.values().end()));
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) worst = std::max(worst, oracle::rel_diff(p.grad()[i], numeric[i]));
  return worst;
}

}  // namespace

TEST_CASE("splitmix64 reference values") {
  // Reference SplitMix64 seeded with 0 emits E220A839..., 6E789E6A...,
  // 06C45D18... . The mix of state 0 is its first output; the counter
  // stream of key 0 starts at counter 1, i.e. at its second output.
  CHECK(splitmix64_mix(0) == 0xE220A8397B1DCDAFULL);
  Rng r(0);
  CHECK(r.next_u64() == 0x6E789E6AA1B965F4ULL);
  CHECK(r.next_u64() == 0x06C45D188009454FULL);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64({}) == 0xCBF29CE484222325ULL);
  const std::string a = "a";
  CHECK(fnv1a64(std::as_bytes(std::span(a.data(), a.size()))) == 0xAF63DC4C8601EC8CULL);
  const std::string foobar = "foobar";
  CHECK(fnv1a64(std::as_bytes(std::span(foobar.data(), foobar.size()))) == 0x85944171F73967E8ULL);
}

TEST_CASE("rng properties") {
  SUBCASE("same key, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }
  SUBCASE("below stays in range and hits every value") {
    Rng r(7);
    std::vector<int> seen(7, 0);
    for (int i = 0; i < 7000; ++i) {
      const auto v = r.below(7);
      REQUIRE(v < 7);
      ++seen[v];
    }
    for (int c : seen) CHECK(c > 800);
  }
  SUBCASE("normal moments") {
    Rng r(3);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
  }
  SUBCASE("shuffle is a permutation") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::vector<int> v(31);
      for (int i = 0; i < 31; ++i) v[i] = i;
      Rng r(seed);
      r.shuffle(std::span<int>(v));
      std::vector<int> sorted = v;
      std::sort(sorted.begin(), sorted.end());
      for (int i = 0; i < 31; ++i) CHECK(sorted[i] == i);
    }
  }
  SUBCASE("derived seeds separate tags") {
    CHECK(derive_seed(1, {0}) != derive_seed(1, {1}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(5, {9}) == derive_seed(5, {9}));
  }
}

TEST_CASE("tensor construction and errors") {
  CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.slice(1).size() == 3);
  CHECK_THROWS_AS(t.item(), ShapeError);
  Tensor g({2}, 0.0, false);
  g.accumulate_grad(std::vector<double>{1, 2});
  CHECK_FALSE(g.has_grad());
  Tensor h({2}, 0.0, true);
  h.accumulate_grad(std::vector<double>{1, 2});
  h.accumulate_grad(std::vector<double>{1, 2});
  CHECK(h.grad()[1] == 4.0);
}

TEST_CASE("matmul and softmax match the naive oracles") {
  oracle::Gen g(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = g.range(1, 5), k = g.range(1, 5), n = g.range(1, 5);
    const Tensor a = random({m, k}, g), b = random({k, n}, g);
    Tape tape;
    const Tensor& c = tape.value(tape.matmul(tape.constant(a), tape.constant(b)));
    const auto expect = oracle::matmul(oracle::to_mat(a.values(), m, k), oracle::to_mat(b.values(), k, n));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(c[i * n + j] == doctest::Approx(expect[i][j]).epsilon(1e-12));

    const Tensor x = random({n}, g, 30.0);
    const Tensor& s = tape.value(tape.softmax_logits(tape.constant(x)));
    const auto sx = oracle::softmax(oracle::Vec(x.values().begin(), x.values().end()));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(s[i] - sx[i]) <= 1e-12);
  }
}

TEST_CASE("neg_log_prob is stable for large logits") {
  Tape tape;
  Var l = tape.constant(Tensor::vector({1000.0, 0.0, -1000.0}));
  CHECK(tape.value(tape.neg_log_prob(l, 0)).item() == doctest::Approx(0.0));
  CHECK(tape.value(tape.neg_log_prob(l, 1)).item() == doctest::Approx(1000.0));
}

TEST_CASE("every primitive's gradient matches central differences") {
  oracle::Gen g(29);
  const double tol = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = g.range(1, 4), c = g.range(2, 5);
    const Tensor x = random({r, c}, g);
    const Tensor other = random({c, r}, g);
    const Tensor same = random({r, c}, g);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.matmul(v, t.constant(other))); }, x) < tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(t.transpose(v), t.constant(other))); }, x) <
          tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(v, v)); }, x) < tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.mean(t.sub(t.scale(v, 3.0), t.constant(same))); }, x) <
          tol);
    CHECK(max_gradient_error(
              [&](Tape& t, Var v) {
                Var parts[] = {v, t.constant(same), v};
                return t.sum(t.mul(t.concat(parts), t.concat(parts)));
              },
              x) < tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(t.select(v, r - 1), t.select(v, 0))); }, x) <
          tol);
    CHECK(max_gradient_error(
              [&](Tape& t, Var v) { return t.sum(t.mul(t.l2_normalize(v), t.constant(same))); }, x) < tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.cosine_sim(v, t.constant(same)); }, x) < tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(t.softmax_logits(v), t.constant(same))); },
                             x) < tol);
    const std::size_t label = g.below(r * c);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.neg_log_prob(t.reshape(v, {r * c}), label); }, x) < tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(t.mean_rows(v), t.mean_rows(v))); }, x) < tol);
    // abs and relu are probed away from their kinks.
    Tensor shifted = x;
    for (double& v : shifted.values()) v += v >= 0 ? 0.1 : -0.1;
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(t.abs(v), t.constant(same))); }, shifted) <
          tol);
    CHECK(max_gradient_error([&](Tape& t, Var v) { return t.sum(t.mul(t.relu(v), t.constant(same))); }, shifted) <
          tol);
  }
}

TEST_CASE("backward replays identically and fills bound parameters") {
  oracle::Gen g(5);
  Tensor w = random({3, 3}, g);
  w.set_requires_grad(true);
  Tape tape;
  Var v = tape.parameter(w);
  Var loss = tape.sum(tape.mul(tape.matmul(v, v), tape.constant(random({3, 3}, g))));
  tape.backward(loss);
  const std::vector<double> first(w.grad().begin(), w.grad().end());
  w.clear_grad();
  tape.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(w.grad()[i] == first[i]);
  CHECK_THROWS_AS(tape.backward(v), ShapeError);
}

TEST_CASE("unreached parameters get zero gradient buffers") {
  Tensor used({2}, 1.0, true), unused({2}, 1.0, true);
  Tape tape;
  Var a = tape.parameter(used);
  tape.parameter(unused);
  tape.backward(tape.sum(a));
  REQUIRE(unused.has_grad());
  CHECK(unused.grad()[0] == 0.0);
  CHECK(used.grad()[0] == 1.0);
}

TEST_CASE("shape mismatches throw") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
  CHECK_THROWS_AS(tape.add(a, tape.constant(Tensor({3, 2}))), ShapeError);
  CHECK_THROWS_AS(tape.select(a, 2), ShapeError);
  CHECK_THROWS_AS(tape.reshape(a, {5}), ShapeError);
  CHECK_THROWS_AS(tape.neg_log_prob(tape.constant(Tensor({3})), 3), ShapeError);
}

TEST_CASE("central-difference helper reports the worst coordinate") {
  Tensor at({3}, std::vector<double>{1.0, -2.0, 0.5});
  const auto eval = [](const Tensor& x) { return x[0] * x[0] + 3 * x[1] + std::sin(x[2]); };
  const std::vector<double> good{2.0, 3.0, std::cos(0.5)};
  CHECK(ad::compare_with_central_differences(good, eval, at, 1e-6).max_rel_error < 1e-8);
  std::vector<double> bad = good;
  bad[2] += 0.25;
  const auto rep = ad::compare_with_central_differences(bad, eval, at, 1e-6);
  CHECK(rep.worst_index == 2);
  CHECK(rep.max_rel_error == doctest::Approx(0.25).epsilon(1e-6));
  const auto nan_eval = [](const Tensor&) { return std::nan(""); };
  CHECK_THROWS_AS(ad::compare_with_central_differences(good, nan_eval, at, 1e-6), NumericError);
}
