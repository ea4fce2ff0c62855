// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/evaluation.hpp"

#include <cmath>
#include <map>
#include <thread>

#include "attribank/errors.hpp"
#include "attribank/trainer.hpp"

namespace attribank {

namespace {

ClassId argmax_class(std::span<const double> z, const std::vector<std::vector<double>>& w,
                     std::span<const ClassId> candidates) {
  std::size_t best = 0;
  double best_logit = cosine_similarity(z, w[0]);
  for (std::size_t k = 1; k < w.size(); ++k) {
    const double l = cosine_similarity(z, w[k]);
    if (l > best_logit || (l == best_logit && candidates[k] < candidates[best])) {
      best = k;
      best_logit = l;
    }
  }
  return candidates[best];
}

void predict_range(const FrozenEncoderPair& encoders, const TrainConfig& config, const LearnerState& state,
                   std::span<const ImageSample> samples, std::span<const ClassId> candidates,
                   std::span<ClassId> out) {
  // Embeddings depend only on the ordered selection (attriclip) or on
  // nothing (baselines), so they are computed once per distinct key.
  std::map<std::vector<std::size_t>, std::vector<std::vector<double>>> cache;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::vector<double> z = encoders.image().encode(samples[i]);
    std::vector<std::size_t> key;
    Selection sel;
    if (state.mode == LearnerMode::kAttriClip) {
      sel = select_top_c(z, state.bank, config.c);
      key = sel.indices;
    }
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, candidate_text_embeddings(encoders.text(), state, candidates, &sel)).first;
    out[i] = argmax_class(z, it->second, candidates);
  }
}

}  // namespace

std::vector<ClassId> predict(const FrozenEncoderPair& encoders, const TrainConfig& config, const LearnerState& state,
                             std::span<const ImageSample> samples, std::span<const ClassId> candidates,
                             std::size_t threads) {
  if (candidates.empty()) throw DataError("evaluate: no candidate classes");
  for (ClassId c : candidates)
    if (!state.has_class(c)) throw DataError("evaluate: candidate class " + std::to_string(c) + " is not registered");
  std::vector<ClassId> out(samples.size());
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (threads == 1) {
    predict_range(encoders, config, state, samples, candidates, out);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (samples.size() + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t lo = std::min(samples.size(), w * chunk);
    const std::size_t hi = std::min(samples.size(), lo + chunk);
    pool.emplace_back([&, w, lo, hi] {
      try {
        predict_range(encoders, config, state, samples.subspan(lo, hi - lo), candidates,
                      std::span<ClassId>(out).subspan(lo, hi - lo));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double evaluate(const FrozenEncoderPair& encoders, const TrainConfig& config, const LearnerState& state,
                std::span<const ImageSample> samples, std::span<const ClassId> candidates, std::size_t threads) {
  if (samples.empty()) throw DataError("evaluate: empty test set");
  const auto pred = predict(encoders, config, state, samples, candidates, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += pred[i] == samples[i].label;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

double mean_prompt_abs_cosine(const TextEncoder& text, const AttributeBank& bank) {
  const std::size_t n = bank.n();
  if (n < 2) return 0.0;
  std::vector<std::vector<double>> g;
  g.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = bank.prompts.slice(i);
    g.push_back(text.encode(Tensor({bank.m(), bank.d()}, std::vector<double>(p.begin(), p.end()))));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sum += std::abs(cosine_similarity(g[i], g[j]));
  return sum / static_cast<double>(n * (n - 1) / 2);
}

CdclOutcome run_cdcl(const FrozenEncoderPair& encoders, const TrainConfig& config, LearnerMode mode,
                     const TaskStream& a, const TaskStream& b, std::size_t threads) {
  a.validate();
  b.validate();
  check_disjoint_classes(a, b);
  ContinualTrainer trainer(encoders, config);
  trainer.set_eval_threads(threads);

  const auto classes_a = a.all_classes();
  const auto classes_b = b.all_classes();
  auto classes_ab = classes_a;
  classes_ab.insert(classes_ab.end(), classes_b.begin(), classes_b.end());
  const auto test_a = a.all_test_samples();
  const auto test_b = b.all_test_samples();
  auto test_ab = test_a;
  test_ab.insert(test_ab.end(), test_b.begin(), test_b.end());

  CdclOutcome out;
  out.report.mode = mode_name(mode);

  // The A leg of the sequential run is the scratch-A run itself.
  LearnerState state_a = LearnerState::create(mode, config, encoders.dim());
  out.scratch_a = trainer.run_sequence(state_a, a);
  out.report.acc_scratch_a = evaluate(encoders, config, state_a, test_a, classes_a, threads);

  LearnerState state_b = LearnerState::create(mode, config, encoders.dim());
  out.scratch_b = trainer.run_sequence(state_b, b);
  out.report.acc_scratch_b = evaluate(encoders, config, state_b, test_b, classes_b, threads);

  LearnerState state_ab = state_a;
  out.a_then_b = trainer.run_sequence(state_ab, b);
  out.report.acc_a2b_on_a = evaluate(encoders, config, state_ab, test_a, classes_a, threads);
  out.report.acc_a2b_on_b = evaluate(encoders, config, state_ab, test_b, classes_b, threads);
  out.report.acc_joint = evaluate(encoders, config, state_ab, test_ab, classes_ab, threads);
  out.report.ft = forward_transfer(out.report);
  out.report.bt = backward_transfer(out.report);
  return out;
}

}  // namespace attribank
