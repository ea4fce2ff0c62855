// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "attribank/encoders.hpp"
#include "attribank/errors.hpp"
#include "oracles.hpp"

using namespace attribank;

namespace {

Tensor from_mat(const oracle::Mat& m) {
  return Tensor({m.size(), m[0].size()}, oracle::flatten(m));
}

}  // namespace

TEST_CASE("text encoder matches the naive oracle") {
  oracle::Gen g(101);
  for (int trial = 0; trial < 40; ++trial) {
    EncoderConfig cfg;
    cfg.seed = g.next();
    cfg.dim = g.range(2, 12);
    cfg.feature_width = g.range(1, 10);
    cfg.max_positions = 16;
    const auto enc = FrozenEncoderPair::toy(cfg);
    const oracle::Mat tokens = g.normals(g.range(1, 9), cfg.dim);
    const auto got = enc.text().encode(from_mat(tokens));
    const auto want = oracle::text_encode(enc.weights(), tokens);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(oracle::rel_diff(got[i], want[i]) <= 1e-12);
  }
}

TEST_CASE("linear image encoder is features times the projection") {
  oracle::Gen g(7);
  EncoderConfig cfg;
  cfg.seed = 3;
  cfg.feature_width = 5;
  cfg.dim = 4;
  const auto enc = FrozenEncoderPair::toy(cfg);
  ImageSample s;
  s.features = g.normals(5);
  const auto got = enc.image().encode(s);
  const auto want = oracle::image_encode(enc.weights(), s.features);
  for (std::size_t i = 0; i < 4; ++i) CHECK(oracle::rel_diff(got[i], want[i]) <= 1e-12);
  s.features.pop_back();
  CHECK_THROWS_AS(enc.image().encode(s), ShapeError);
}

TEST_CASE("weights are seeded and scaled by fan-in") {
  EncoderConfig cfg;
  cfg.seed = 9;
  cfg.feature_width = 64;
  cfg.dim = 64;
  const auto a = EncoderWeights::generate(cfg);
  const auto b = EncoderWeights::generate(cfg);
  CHECK(a.checksum() == b.checksum());
  CHECK(bitwise_equal(a.token_mix.values(), b.token_mix.values()));
  cfg.seed = 10;
  CHECK(EncoderWeights::generate(cfg).checksum() != a.checksum());
  // Each entry ~ N(0, 1/fan_in): the mean square of a 64x64 table is near 1/64.
  double ss = 0;
  for (double v : a.text_proj.values()) ss += v * v;
  CHECK(ss / 4096.0 == doctest::Approx(1.0 / 64).epsilon(0.1));
}

TEST_CASE("aligned towers share the projection") {
  EncoderConfig cfg;
  cfg.seed = 4;
  cfg.feature_width = 8;
  cfg.dim = 8;
  cfg.aligned_towers = true;
  const auto w = EncoderWeights::generate(cfg);
  CHECK(bitwise_equal(w.image_proj.values(), w.text_proj.values()));
  cfg.feature_width = 6;
  CHECK_THROWS_AS(EncoderWeights::generate(cfg), ConfigError);
}

TEST_CASE("lookup backend") {
  EncoderConfig cfg;
  cfg.dim = 3;
  cfg.feature_width = 3;
  const auto enc = FrozenEncoderPair::lookup(cfg, {{7, {1.0, 2.0, 3.0}}});
  ImageSample verbatim;
  verbatim.features = {0.5, -1.0, 2.0};
  CHECK(enc.image().encode(verbatim) == verbatim.features);
  ImageSample by_id;
  by_id.id = 7;
  CHECK(enc.image().encode(by_id) == std::vector<double>{1.0, 2.0, 3.0});
  by_id.id = 8;
  CHECK_THROWS_AS(enc.image().encode(by_id), DataError);
  verbatim.features = {1.0};
  CHECK_THROWS_AS(enc.image().encode(verbatim), ShapeError);
}

TEST_CASE("text encoder rejects bad shapes") {
  EncoderConfig cfg;
  cfg.dim = 4;
  cfg.max_positions = 3;
  const auto enc = FrozenEncoderPair::toy(cfg);
  CHECK_THROWS_AS(enc.text().encode(Tensor({2, 5})), ShapeError);
  CHECK_THROWS_AS(enc.text().encode(Tensor({4, 4})), ShapeError);
  CHECK_NOTHROW(enc.text().encode(Tensor({3, 4})));
}

TEST_CASE("encoding never alters the weights") {
  EncoderConfig cfg;
  cfg.seed = 12;
  cfg.dim = 6;
  cfg.feature_width = 6;
  const auto enc = FrozenEncoderPair::toy(cfg);
  const auto before = enc.checksum();
  oracle::Gen g(3);
  for (int i = 0; i < 20; ++i) {
    ad::Tape tape;
    Tensor tok({3, 6}, g.normals(18), true);
    ad::Var v = tape.parameter(tok);
    tape.backward(tape.sum(enc.text().encode(tape, v)));
    CHECK(tok.has_grad());
  }
  CHECK(enc.checksum() == before);
}
