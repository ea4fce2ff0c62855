// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/gradcheck.hpp"

#include <functional>

#include "attribank/bank.hpp"
#include "attribank/encoders.hpp"
#include "attribank/errors.hpp"
#include "attribank/learner.hpp"
#include "attribank/rng.hpp"

namespace attribank {

void GradSuiteOptions::validate() const {
  if (n < 1 || n > 6) throw ConfigError("gradcheck: N must lie in [1, 6]");
  if (m < 1 || m > 4) throw ConfigError("gradcheck: M must lie in [1, 4]");
  if (d < 2 || d > 16) throw ConfigError("gradcheck: D must lie in [2, 16]");
  if (k < 1 || k > 4) throw ConfigError("gradcheck: K must lie in [1, 4]");
  if (batch < 1) throw ConfigError("gradcheck: batch must be positive");
  if (c < 1 || c > n) throw ConfigError("gradcheck: C must lie in [1, N]");
  if (!(h > 0)) throw ConfigError("gradcheck: step must be positive");
  distance.validate();
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

ad::GradCheckReport check(const std::function<ad::Var(ad::Tape&, ad::Var)>& f, const Tensor& at, double h,
                          bool corrupt) {
  Tensor param(at.shape(), std::vector<double>(at.values().begin(), at.values().end()), true);
  std::vector<double> analytic;
  {
    ad::Tape tape;
    const ad::Var loss = f(tape, tape.parameter(param));
    tape.backward(loss);
    analytic.assign(param.grad().begin(), param.grad().end());
  }
  if (corrupt) analytic[analytic.size() / 2] += 0.5;
  const auto evaluate = [&](const Tensor& x) {
    ad::Tape tape;
    return tape.value(f(tape, tape.constant(x))).item();
  };
  return ad::compare_with_central_differences(analytic, evaluate, at, h);
}

}  // namespace

std::vector<GradGroupResult> run_gradient_suite(const GradSuiteOptions& o) {
  o.validate();
  EncoderConfig ec;
  ec.seed = o.seed;
  ec.feature_width = o.d;
  ec.dim = o.d;
  const auto encoders = FrozenEncoderPair::toy(ec);
  const TextEncoder& text = encoders.text();

  Rng rng(derive_seed(o.seed, {0x6C4E}));
  AttributeBank bank = AttributeBank::init(o.n, o.m, o.d, derive_seed(o.seed, {0x6C4F}));
  // Prompts drawn at unit scale so the probe is not dominated by the
  // near-zero initialization.
  bank.prompts = random_tensor({o.n, o.m, o.d}, rng, 1.0);
  std::vector<Tensor> tokens;
  for (std::size_t i = 0; i < o.k; ++i) tokens.push_back(random_tensor({1, o.d}, rng, 1.0));
  std::vector<const Tensor*> token_ptrs;
  for (const auto& t : tokens) token_ptrs.push_back(&t);

  EncodedBatch batch;
  for (std::size_t b = 0; b < o.batch; ++b) {
    const Tensor z = random_tensor({o.d}, rng, 1.0);
    batch.z.emplace_back(z.values().begin(), z.values().end());
    batch.labels.push_back(rng.below(o.k));
  }
  std::vector<Selection> fixed;
  for (const auto& z : batch.z) fixed.push_back(select_top_c(z, bank.keys, o.c));

  TrainConfig cfg;
  cfg.n = o.n;
  cfg.m = o.m;
  cfg.c = o.c;
  cfg.tau = o.tau;
  cfg.lambda_k = o.lambda_k;
  cfg.lambda_p = o.lambda_p;
  cfg.distance = o.distance;

  std::vector<GradGroupResult> out;
  const auto record = [&](std::string group, const ad::GradCheckReport& r) {
    out.push_back({std::move(group), r, r.max_rel_error <= o.tolerance});
  };

  record("keys", check(
                     [&](ad::Tape& t, ad::Var keys) {
                       return attriclip_forward(t, text, cfg, keys, t.constant(bank.prompts), batch, token_ptrs,
                                                &fixed)
                           .total;
                     },
                     bank.keys, o.h, o.corrupt_gradient));
  record("prompts", check(
                        [&](ad::Tape& t, ad::Var prompts) {
                          return attriclip_forward(t, text, cfg, t.constant(bank.keys), prompts, batch,
                                                   token_ptrs, &fixed)
                              .total;
                        },
                        bank.prompts, o.h, false));
  const Tensor shared = random_tensor({o.m, o.d}, rng, 1.0);
  record("shared_prompt", check(
                              [&](ad::Tape& t, ad::Var prompt) {
                                return shared_prompt_forward(t, text, o.tau, prompt, batch, token_ptrs).total;
                              },
                              shared, o.h, false));
  return out;
}

}  // namespace attribank
