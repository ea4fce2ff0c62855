// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "attribank/bank.hpp"
#include "attribank/errors.hpp"
#include "attribank/learner.hpp"
#include "attribank/objective.hpp"
#include "oracles.hpp"

using namespace attribank;

namespace {

constexpr double kScalarTol = 1e-10;

struct Instance {
  FrozenEncoderPair encoders;
  oracle::ProblemInstance p;
  std::size_t n, m, d, k, c;
};

Instance random_instance(oracle::Gen& g) {
  const std::size_t n = g.range(1, 5), m = g.range(1, 3), d = g.range(2, 6), k = g.range(1, 4);
  EncoderConfig ec;
  ec.seed = g.next();
  ec.dim = d;
  ec.feature_width = d;
  Instance in{FrozenEncoderPair::toy(ec), {}, n, m, d, k, g.range(1, n)};
  in.p.keys = g.normals(n, d);
  for (std::size_t i = 0; i < n; ++i) in.p.prompts.push_back(g.normals(m, d));
  for (std::size_t i = 0; i < k; ++i) in.p.class_tokens.push_back(g.normals(1, d));
  const std::size_t b = g.range(1, 3);
  for (std::size_t i = 0; i < b; ++i) {
    in.p.z.push_back(g.normals(d));
    in.p.labels.push_back(g.below(k));
  }
  return in;
}

Tensor prompts_tensor(const Instance& in) {
  oracle::Vec flat;
  for (const auto& p : in.p.prompts) {
    const auto f = oracle::flatten(p);
    flat.insert(flat.end(), f.begin(), f.end());
  }
  return Tensor({in.n, in.m, in.d}, flat);
}

oracle::Distance to_oracle(DistanceKind k) {
  switch (k) {
    case DistanceKind::kMse:
      return oracle::Distance::kMse;
    case DistanceKind::kTriplet:
      return oracle::Distance::kTriplet;
    default:
      return oracle::Distance::kCosine;
  }
}

}  // namespace

TEST_CASE("predict_probabilities") {
  SUBCASE("matches a naive softmax on random instances") {
    oracle::Gen g(77);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = g.range(2, 8), k = g.range(1, 6);
      const auto z = g.normals(d);
      const auto w = g.normals(k, d);
      const double tau = trial % 2 ? 0.01 : 0.5;
      const auto p = predict_probabilities(z, w, tau);
      oracle::Vec logits;
      for (const auto& row : w) logits.push_back(oracle::cosine(z, row) / tau);
      const auto want = oracle::softmax(logits);
      double sum = 0;
      for (std::size_t i = 0; i < k; ++i) {
        CHECK(oracle::rel_diff(p[i], want[i]) <= kScalarTol);
        sum += p[i];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
  SUBCASE("identical text embeddings split evenly") {
    const std::vector<double> z{0.3, -1.0};
    const auto p = predict_probabilities(z, {{1.0, 2.0}, {1.0, 2.0}}, 0.01);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
  }
  SUBCASE("errors") {
    const std::vector<double> z{1.0, 0.0};
    CHECK_THROWS(predict_probabilities(z, {}, 0.01));
    CHECK_THROWS(predict_probabilities(z, {{1.0, 0.0}}, 0.0));
    CHECK_THROWS(predict_probabilities(z, {{std::nan(""), 0.0}}, 0.01));
  }
}

TEST_CASE("each loss term and the total match the naive oracles") {
  oracle::Gen g(4242);
  for (int trial = 0; trial < 100; ++trial) {
    Instance in = random_instance(g);
    for (DistanceKind kind : {DistanceKind::kCosine, DistanceKind::kMse, DistanceKind::kTriplet}) {
      if (kind == DistanceKind::kTriplet && in.c >= in.n) continue;
      TrainConfig cfg;
      cfg.n = in.n;
      cfg.m = in.m;
      cfg.c = in.c;
      cfg.tau = 0.01 + 0.5 * g.uniform();
      cfg.lambda_k = g.uniform();
      cfg.lambda_p = g.uniform();
      cfg.distance.kind = kind;
      std::vector<Tensor> tokens;
      for (const auto& t : in.p.class_tokens) tokens.push_back(Tensor({1, in.d}, oracle::flatten(t)));
      std::vector<const Tensor*> ptrs;
      for (const auto& t : tokens) ptrs.push_back(&t);
      EncodedBatch batch{in.p.z, in.p.labels};

      ad::Tape tape;
      const auto fwd = attriclip_forward(tape, in.encoders.text(), cfg,
                                         tape.constant(Tensor({in.n, in.d}, oracle::flatten(in.p.keys))),
                                         tape.constant(prompts_tensor(in)), batch, ptrs);
      const auto want = oracle::full_loss(in.encoders.weights(), in.p, in.c, cfg.tau, cfg.lambda_k, cfg.lambda_p,
                                          to_oracle(kind));
      CHECK(oracle::rel_diff(tape.value(fwd.l_m).item(), want.l_m) <= kScalarTol);
      CHECK(oracle::rel_diff(tape.value(fwd.l_k).item(), want.l_k) <= kScalarTol);
      CHECK(oracle::rel_diff(tape.value(fwd.l_p).item(), want.l_p) <= kScalarTol);
      CHECK(oracle::rel_diff(tape.value(fwd.total).item(), want.total) <= kScalarTol);
    }
  }
}

TEST_CASE("loss breakdown invariants") {
  const auto b = LossBreakdown::combine(1.25, 0.5, 0.1, 0.7, 0.3, 0.01);
  CHECK(std::abs(b.total - (1.25 + 0.7 * 0.5 + 0.3 * 0.1)) <= 1e-12);
  ad::Tape tape;
  auto s = [&](double v) { return tape.constant(Tensor::scalar(v)); };
  CHECK(tape.value(total_loss(tape, s(1.25), s(0.5), s(0.1), 0.7, 0.3)).item() == b.total);
  CHECK_THROWS_AS(total_loss(tape, s(1), s(1), s(1), -0.1, 0.3), ConfigError);
}

TEST_CASE("classification loss rejects out-of-range labels") {
  ad::Tape tape;
  ad::Var z = tape.constant(Tensor::vector({1.0, 0.0}));
  ClassificationTerm t{z, {tape.constant(Tensor::vector({1.0, 1.0}))}, 1};
  CHECK_THROWS_AS(classification_loss(tape, std::span(&t, 1), 0.01), DataError);
}

TEST_CASE("triplet needs an unselected key") {
  ad::Tape tape;
  Selection sel{{0, 1}, {0, 0}};
  ad::Var z = tape.constant(Tensor::vector({1.0, 0.0}));
  ad::Var keys = tape.constant(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}));
  DistanceVariant v;
  v.kind = DistanceKind::kTriplet;
  CHECK_THROWS_AS(key_matching_loss(tape, z, sel, keys, v), ConfigError);
  v.triplet_margin = 0.0;
  CHECK_THROWS_AS(v.validate(), ConfigError);
}

TEST_CASE("orthogonality loss is zero for one prompt and for orthogonal embeddings") {
  EncoderConfig ec;
  ec.dim = 4;
  ec.feature_width = 4;
  const auto enc = FrozenEncoderPair::toy(ec);
  ad::Tape tape;
  CHECK(tape.value(prompt_orthogonality_loss(tape, tape.constant(Tensor({1, 2, 4}, 0.3)), enc.text())).item() ==
        0.0);
  // Two identical prompts: |cos| = 1 on the single pair -> 1/(2*1).
  ad::Tape t2;
  CHECK(t2.value(prompt_orthogonality_loss(t2, t2.constant(Tensor({2, 2, 4}, 0.3)), enc.text())).item() ==
        doctest::Approx(0.5));
}

TEST_CASE("distance variants parse by name") {
  CHECK(DistanceVariant::parse("cosine").kind == DistanceKind::kCosine);
  CHECK(DistanceVariant::parse("mse").kind == DistanceKind::kMse);
  CHECK(DistanceVariant::parse("triplet").kind == DistanceKind::kTriplet);
  CHECK(DistanceVariant::parse("triplet").name() == "triplet");
  CHECK_THROWS_AS(DistanceVariant::parse("l1"), ConfigError);
}
