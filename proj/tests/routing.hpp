// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

// Gradient-routing property shared by the unit tests and the acceptance run:
// key gradients come only from the key-matching term, prompt gradients only
// from the classification and orthogonality terms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "attribank/learner.hpp"
#include "attribank/objective.hpp"
#include "oracles.hpp"

namespace routing {

struct Result {
  double max_key_diff = 0.0;     // |grad_keys(total) - grad_keys(lambda_k L_k)|
  double max_prompt_diff = 0.0;  // |grad_prompts(total) - grad_prompts(L_m + lambda_p L_p)|
  bool unselected_zero = true;   // lambda_p = 0: unselected prompt rows exactly zero
  int trials = 0;
};

inline Result check(std::uint64_t seed, int trials) {
  using namespace attribank;
  oracle::Gen g(seed);
  Result res;
  for (int trial = 0; trial < trials; ++trial, ++res.trials) {
    const std::size_t n = g.range(2, 6), m = g.range(1, 3), d = g.range(2, 6), k = g.range(1, 4);
    EncoderConfig ec;
    ec.seed = g.next();
    ec.feature_width = d;
    ec.dim = d;
    const auto enc = FrozenEncoderPair::toy(ec);
    TrainConfig cfg;
    cfg.n = n;
    cfg.m = m;
    cfg.c = g.range(1, n - 1);
    cfg.tau = 0.05;
    cfg.lambda_k = 0.1 + g.uniform();
    cfg.lambda_p = 0.1 + g.uniform();
    std::vector<Tensor> tokens;
    for (std::size_t i = 0; i < k; ++i) tokens.push_back(Tensor({1, d}, g.normals(d)));
    std::vector<const Tensor*> ptrs;
    for (const auto& t : tokens) ptrs.push_back(&t);
    EncodedBatch batch;
    for (std::size_t b = 0, nb = g.range(1, 3); b < nb; ++b) {
      batch.z.push_back(g.normals(d));
      batch.labels.push_back(g.below(k));
    }
    const Tensor keys0({n, d}, g.normals(n * d));
    const Tensor prompts0({n, m, d}, g.normals(n * m * d, 0.5));

    // Full objective.
    Tensor keys = keys0, prompts = prompts0;
    keys.set_requires_grad(true);
    prompts.set_requires_grad(true);
    std::vector<Selection> sels;
    {
      ad::Tape t;
      const auto fwd = attriclip_forward(t, enc.text(), cfg, t.parameter(keys), t.parameter(prompts), batch, ptrs);
      t.backward(fwd.total);
      sels = fwd.selections;
    }
    // lambda_k * L_k alone.
    Tensor keys_k = keys0;
    keys_k.set_requires_grad(true);
    {
      ad::Tape t;
      ad::Var kv = t.parameter(keys_k);
      std::vector<ad::Var> terms;
      for (std::size_t b = 0; b < batch.z.size(); ++b)
        terms.push_back(key_matching_loss(t, t.constant({d}, batch.z[b]), sels[b], kv, cfg.distance));
      t.backward(t.scale(t.mean(t.concat(terms)), cfg.lambda_k));
    }
    // L_m + lambda_p * L_p alone.
    Tensor prompts_mp = prompts0;
    prompts_mp.set_requires_grad(true);
    {
      ad::Tape t;
      ad::Var pv = t.parameter(prompts_mp);
      std::vector<ClassificationTerm> terms;
      for (std::size_t b = 0; b < batch.z.size(); ++b) {
        ClassificationTerm term{t.constant({d}, batch.z[b]), {}, batch.labels[b]};
        for (const Tensor* tok : ptrs)
          term.text_embeddings.push_back(enc.text().encode(t, compose_text_input(t, sels[b], pv, t.constant(*tok))));
        terms.push_back(term);
      }
      ad::Var lm = classification_loss(t, terms, cfg.tau);
      t.backward(t.add(lm, t.scale(prompt_orthogonality_loss(t, pv, enc.text()), cfg.lambda_p)));
    }
    for (std::size_t i = 0; i < keys.numel(); ++i)
      res.max_key_diff = std::max(res.max_key_diff, std::abs(keys.grad()[i] - keys_k.grad()[i]));
    for (std::size_t i = 0; i < prompts.numel(); ++i)
      res.max_prompt_diff = std::max(res.max_prompt_diff, std::abs(prompts.grad()[i] - prompts_mp.grad()[i]));

    cfg.lambda_p = 0.0;
    Tensor p2 = prompts0;
    p2.set_requires_grad(true);
    ad::Tape t;
    const auto fwd = attriclip_forward(t, enc.text(), cfg, t.constant(keys0), t.parameter(p2), batch, ptrs);
    t.backward(fwd.total);
    std::vector<bool> used(n, false);
    for (const auto& s : fwd.selections)
      for (std::size_t j : s.indices) used[j] = true;
    for (std::size_t j = 0; j < n; ++j)
      if (!used[j])
        for (std::size_t q = 0; q < m * d; ++q) res.unselected_zero = res.unselected_zero && p2.grad()[j * m * d + q] == 0.0;
  }
  return res;
}

}  // namespace routing
