// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "attribank/autodiff.hpp"
#include "attribank/bank.hpp"
#include "attribank/encoders.hpp"

namespace attribank {

enum class DistanceKind { kCosine, kMse, kTriplet };

/// Distance used by the key-matching loss.
struct DistanceVariant {
  DistanceKind kind = DistanceKind::kCosine;
  double triplet_margin = 0.2;

  void validate() const;
  std::string name() const;
  static DistanceVariant parse(const std::string& name);
};

struct LossBreakdown {
  double l_m = 0.0;
  double l_k = 0.0;
  double l_p = 0.0;
  double total = 0.0;
  double lambda_k = 0.0;
  double lambda_p = 0.0;
  double tau = 0.0;

  /// Fills total = l_m + lambda_k*l_k + lambda_p*l_p in the same operation
  /// order the tape uses.
  static LossBreakdown combine(double l_m, double l_k, double l_p, double lambda_k, double lambda_p, double tau);
};

/// softmax_k(cos(z, w_k) / tau), computed with max-logit subtraction.
std::vector<double> predict_probabilities(std::span<const double> z,
                                          const std::vector<std::vector<double>>& text_embeddings, double tau);

/// cos(z, w_k) / tau for every candidate -> {K}
ad::Var class_logits(ad::Tape& tape, ad::Var z, std::span<const ad::Var> text_embeddings, double tau);

/// One image's contribution to the classification loss.
struct ClassificationTerm {
  ad::Var z;
  std::vector<ad::Var> text_embeddings;
  std::size_t label = 0;
};

/// Mean over terms of -log p(label | z).
ad::Var classification_loss(ad::Tape& tape, std::span<const ClassificationTerm> terms, double tau);

/// Sum over selected keys of the configured distance to z. z is a constant;
/// `keys` is the bank's (N, D) key tensor on the tape. The triplet negative
/// is the closest unselected key; its index is fixed per call but its value
/// receives gradient.
ad::Var key_matching_loss(ad::Tape& tape, ad::Var z, const Selection& sel, ad::Var keys,
                          const DistanceVariant& variant);

/// (1/(N(N-1))) * sum_{i<j} |cos(g(P_i), g(P_j))| over all N prompts, each
/// encoded without a class token. Zero for N = 1.
ad::Var prompt_orthogonality_loss(ad::Tape& tape, ad::Var prompts, const TextEncoder& text);

/// l_m + lambda_k*l_k + lambda_p*l_p
ad::Var total_loss(ad::Tape& tape, ad::Var l_m, ad::Var l_k, ad::Var l_p, double lambda_k, double lambda_p);

}  // namespace attribank
