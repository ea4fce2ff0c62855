// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/objective.hpp"

#include <algorithm>
#include <cmath>

#include "attribank/errors.hpp"

namespace attribank {

void DistanceVariant::validate() const {
  if (kind == DistanceKind::kTriplet && !(triplet_margin > 0))
    throw ConfigError("distance: triplet margin must be positive");
}

std::string DistanceVariant::name() const {
  switch (kind) {
    case DistanceKind::kCosine:
      return "cosine";
    case DistanceKind::kMse:
      return "mse";
    case DistanceKind::kTriplet:
      return "triplet";
  }
  return "cosine";
}

DistanceVariant DistanceVariant::parse(const std::string& name) {
  if (name == "cosine") return {DistanceKind::kCosine};
  if (name == "mse") return {DistanceKind::kMse};
  if (name == "triplet") return {DistanceKind::kTriplet};
  throw ConfigError("distance: unknown variant '" + name + "' (expected cosine, mse or triplet)");
}

LossBreakdown LossBreakdown::combine(double l_m, double l_k, double l_p, double lambda_k, double lambda_p,
                                     double tau) {
  return {l_m, l_k, l_p, (l_m + lambda_k * l_k) + lambda_p * l_p, lambda_k, lambda_p, tau};
}

std::vector<double> predict_probabilities(std::span<const double> z,
                                          const std::vector<std::vector<double>>& text_embeddings, double tau) {
  if (text_embeddings.empty()) throw ConfigError("predict_probabilities: no candidate classes");
  if (!(tau > 0)) throw ConfigError("predict_probabilities: tau must be positive");
  for (double v : z)
    if (!std::isfinite(v)) throw NumericError("predict_probabilities: non-finite image embedding");
  std::vector<double> logits;
  logits.reserve(text_embeddings.size());
  for (const auto& w : text_embeddings) {
    for (double v : w)
      if (!std::isfinite(v)) throw NumericError("predict_probabilities: non-finite text embedding");
    logits.push_back(cosine_similarity(z, w) / tau);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& l : logits) sum += (l = std::exp(l - mx));
  for (double& l : logits) l /= sum;
  return logits;
}

ad::Var class_logits(ad::Tape& tape, ad::Var z, std::span<const ad::Var> text_embeddings, double tau) {
  if (text_embeddings.empty()) throw ConfigError("class_logits: no candidate classes");
  if (!(tau > 0)) throw ConfigError("class_logits: tau must be positive");
  std::vector<ad::Var> cos;
  cos.reserve(text_embeddings.size());
  for (ad::Var w : text_embeddings) cos.push_back(tape.cosine_sim(z, w));
  return tape.scale(tape.concat(cos), 1.0 / tau);
}

ad::Var classification_loss(ad::Tape& tape, std::span<const ClassificationTerm> terms, double tau) {
  if (terms.empty()) throw ConfigError("classification_loss: empty batch");
  std::vector<ad::Var> nll;
  nll.reserve(terms.size());
  for (const auto& term : terms) {
    if (term.label >= term.text_embeddings.size())
      throw DataError("classification_loss: label " + std::to_string(term.label) + " outside " +
                      std::to_string(term.text_embeddings.size()) + " candidate classes");
    nll.push_back(tape.neg_log_prob(class_logits(tape, term.z, term.text_embeddings, tau), term.label));
  }
  return tape.mean(tape.concat(nll));
}

ad::Var key_matching_loss(ad::Tape& tape, ad::Var z, const Selection& sel, ad::Var keys,
                          const DistanceVariant& variant) {
  variant.validate();
  const Tensor& k = tape.value(keys);
  const std::size_t n = k.dim(0);
  if (sel.indices.empty()) throw ConfigError("key_matching_loss: empty selection");
  ad::Var one = tape.constant(Tensor::scalar(1.0));
  std::vector<ad::Var> terms;
  terms.reserve(sel.indices.size());
  switch (variant.kind) {
    case DistanceKind::kCosine:
      for (std::size_t j : sel.indices)
        terms.push_back(tape.sub(one, tape.cosine_sim(z, tape.select(keys, j))));
      break;
    case DistanceKind::kMse: {
      ad::Var z_hat = tape.l2_normalize(z);
      for (std::size_t j : sel.indices) {
        ad::Var diff = tape.sub(z_hat, tape.l2_normalize(tape.select(keys, j)));
        terms.push_back(tape.sum(tape.mul(diff, diff)));
      }
      break;
    }
    case DistanceKind::kTriplet: {
      if (sel.indices.size() >= n)
        throw ConfigError("key_matching_loss: triplet variant needs an unselected key (C must be < N)");
      const auto zv = tape.value(z).values();
      std::size_t neg = n;
      double neg_gamma = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::find(sel.indices.begin(), sel.indices.end(), i) != sel.indices.end()) continue;
        const double g = score(zv, k.slice(i));
        if (neg == n || g < neg_gamma) neg = i, neg_gamma = g;
      }
      ad::Var gamma_neg = tape.sub(one, tape.cosine_sim(z, tape.select(keys, neg)));
      ad::Var margin = tape.constant(Tensor::scalar(variant.triplet_margin));
      for (std::size_t j : sel.indices) {
        ad::Var gamma = tape.sub(one, tape.cosine_sim(z, tape.select(keys, j)));
        terms.push_back(tape.relu(tape.add(tape.sub(gamma, gamma_neg), margin)));
      }
      break;
    }
  }
  return tape.sum(tape.concat(terms));
}

ad::Var prompt_orthogonality_loss(ad::Tape& tape, ad::Var prompts, const TextEncoder& text) {
  const std::size_t n = tape.value(prompts).dim(0);
  if (n < 2) return tape.constant(Tensor::scalar(0.0));
  std::vector<ad::Var> emb;
  emb.reserve(n);
  for (std::size_t i = 0; i < n; ++i) emb.push_back(text.encode(tape, tape.select(prompts, i)));
  std::vector<ad::Var> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back(tape.abs(tape.cosine_sim(emb[i], emb[j])));
  const double nn = static_cast<double>(n);
  return tape.scale(tape.sum(tape.concat(pairs)), 1.0 / (nn * (nn - 1.0)));
}

ad::Var total_loss(ad::Tape& tape, ad::Var l_m, ad::Var l_k, ad::Var l_p, double lambda_k, double lambda_p) {
  if (lambda_k < 0 || lambda_p < 0) throw ConfigError("total_loss: loss weights must be non-negative");
  return tape.add(tape.add(l_m, tape.scale(l_k, lambda_k)), tape.scale(l_p, lambda_p));
}

}  // namespace attribank
