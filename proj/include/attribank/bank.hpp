// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "attribank/autodiff.hpp"
#include "attribank/tensor.hpp"

namespace attribank {

/// Smallest key norm tolerated after init and after every update.
inline constexpr double kKeyNormFloor = 1e-9;

/// N trainable (key, prompt) pairs. keys is (N, D); prompts is (N, M, D).
struct AttributeBank {
  Tensor keys;
  Tensor prompts;

  std::size_t n() const { return keys.dim(0); }
  std::size_t m() const { return prompts.dim(1); }
  std::size_t d() const { return keys.dim(1); }

  /// keys ~ N(0,1)/sqrt(d), prompts ~ N(0, 0.02^2).
  static AttributeBank init(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed);

  /// Throws NumericError if any key norm fell below kKeyNormFloor.
  void check_key_norms() const;
};

/// <a,b>/(|a||b|) with the same norm guard the tape uses.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Cosine distance 1 - <z,k>/(|z||k|) with the norm guard; in [0, 2].
double score(std::span<const double> z, std::span<const double> key);

/// Indices ordered by ascending distance; ties broken by lowest index.
struct Selection {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

/// The c keys closest to z. Plain arithmetic, never on a tape.
Selection select_top_c(std::span<const double> z, const AttributeBank& bank, std::size_t c);
/// Same, against a bare (N, D) key matrix.
Selection select_top_c(std::span<const double> z, const Tensor& keys, std::size_t c);

/// concat(P_{j_1}; ...; P_{j_C}; class_tokens) -> (C*M + L_cls, D).
/// `prompts` is the bank's (N, M, D) prompt tensor on the tape.
ad::Var compose_text_input(ad::Tape& tape, const Selection& sel, ad::Var prompts, ad::Var class_tokens);

}  // namespace attribank
