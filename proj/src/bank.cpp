// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "attribank/errors.hpp"
#include "attribank/rng.hpp"

namespace attribank {

AttributeBank AttributeBank::init(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed) {
  if (n == 0 || m == 0 || d == 0) throw ConfigError("init_bank: n, m and d must be positive");
  AttributeBank bank{Tensor({n, d}, 0.0, true), Tensor({n, m, d}, 0.0, true)};
  Rng key_rng(derive_seed(seed, {0xB4, 1}));
  const double ks = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : bank.keys.values()) v = key_rng.normal() * ks;
  Rng prompt_rng(derive_seed(seed, {0xB4, 2}));
  for (double& v : bank.prompts.values()) v = prompt_rng.normal() * 0.02;
  bank.check_key_norms();
  return bank;
}

void AttributeBank::check_key_norms() const {
  for (std::size_t i = 0; i < n(); ++i) {
    double s = 0.0;
    for (double v : keys.slice(i)) s += v * v;
    if (!(std::sqrt(s) >= kKeyNormFloor))
      throw NumericError("attribute bank: key " + std::to_string(i) + " norm " + std::to_string(std::sqrt(s)) +
                         " below floor");
  }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("cosine_similarity: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double c = ab / (std::sqrt(aa + ad::kNormEpsilon) * std::sqrt(bb + ad::kNormEpsilon));
  if (!std::isfinite(c)) throw NumericError("cosine_similarity: non-finite input");
  return c;
}

double score(std::span<const double> z, std::span<const double> key) { return 1.0 - cosine_similarity(z, key); }

Selection select_top_c(std::span<const double> z, const AttributeBank& bank, std::size_t c) {
  return select_top_c(z, bank.keys, c);
}

Selection select_top_c(std::span<const double> z, const Tensor& keys, std::size_t c) {
  const std::size_t n = keys.dim(0);
  if (c < 1 || c > n)
    throw ConfigError("select_top_c: c=" + std::to_string(c) + " outside [1, " + std::to_string(n) + "]");
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = score(z, keys.slice(i));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c), order.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  Selection sel;
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c));
  for (std::size_t i : sel.indices) sel.distances.push_back(dist[i]);
  return sel;
}

ad::Var compose_text_input(ad::Tape& tape, const Selection& sel, ad::Var prompts, ad::Var class_tokens) {
  const Tensor& p = tape.value(prompts);
  const Tensor& cls = tape.value(class_tokens);
  if (p.rank() != 3 || cls.rank() != 2 || cls.dim(1) != p.dim(2))
    throw ShapeError("compose_text_input: prompts " + shape_str(p.shape()) + " incompatible with class tokens " +
                     shape_str(cls.shape()));
  std::vector<ad::Var> parts;
  parts.reserve(sel.indices.size() + 1);
  for (std::size_t j : sel.indices) {
    if (j >= p.dim(0)) throw ShapeError("compose_text_input: selection index out of range");
    parts.push_back(tape.select(prompts, j));
  }
  parts.push_back(class_tokens);
  return tape.concat(parts);
}

}  // namespace attribank
