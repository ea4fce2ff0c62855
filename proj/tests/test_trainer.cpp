// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "attribank/data_io.hpp"
#include "attribank/errors.hpp"
#include "attribank/evaluation.hpp"
#include "attribank/trainer.hpp"
#include "oracles.hpp"
#include "routing.hpp"

using namespace attribank;

namespace {

SyntheticSpec tiny_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_latent_attributes = 6;
  s.attributes_per_class = 2;
  s.num_tasks = 3;
  s.classes_per_task = 2;
  s.samples_per_class = 12;
  s.test_samples_per_class = 6;
  s.feature_dim = 8;
  s.seed = seed;
  return s;
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig c;
  c.n = 4;
  c.m = 2;
  c.c = 2;
  c.epochs_per_task = 2;
  c.batch_size = 8;
  c.lr0 = 0.05;
  c.seed = seed;
  return c;
}

FrozenEncoderPair tiny_encoders(std::uint64_t seed, std::size_t d = 8) {
  EncoderConfig ec;
  ec.seed = seed;
  ec.feature_width = d;
  ec.dim = d;
  return FrozenEncoderPair::toy(ec);
}

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("cosine schedule") {
  CHECK(lr_at(0, 100, 0.001) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(std::abs(lr_at(100, 100, 0.001)) <= 1e-18);
  CHECK(lr_at(50, 100, 0.001) == doctest::Approx(0.0005).epsilon(1e-12));
  for (std::size_t s = 1; s <= 100; ++s) CHECK(lr_at(s, 100, 1.0) <= lr_at(s - 1, 100, 1.0));
}

TEST_CASE("one SGD step equals a hand-rolled finite-difference descent") {
  // N=3, M=2, D=4, K=2, one image.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    oracle::Gen g(seed);
    const std::size_t n = 3, m = 2, d = 4;
    EncoderConfig ec;
    ec.seed = seed;
    ec.feature_width = d;
    ec.dim = d;
    const auto enc = FrozenEncoderPair::toy(ec);
    TrainConfig cfg;
    cfg.n = n;
    cfg.m = m;
    cfg.c = 2;
    cfg.tau = 0.2;
    cfg.seed = seed;
    LearnerState st = LearnerState::create(LearnerMode::kAttriClip, cfg, d);
    st.bank.keys = Tensor({n, d}, g.normals(n * d), true);
    st.bank.prompts = Tensor({n, m, d}, g.normals(n * m * d, 0.5), true);
    oracle::ProblemInstance p;
    for (ClassId c = 0; c < 2; ++c) {
      p.class_tokens.push_back(g.normals(1, d));
      st.register_class(c, Tensor({1, d}, p.class_tokens.back()[0]));
    }
    ImageSample s;
    s.features = g.normals(d);
    s.label = 1;
    p.z = {enc.image().encode(s)};
    p.labels = {1};
    p.keys = oracle::to_mat(st.bank.keys.values(), n, d);
    for (std::size_t i = 0; i < n; ++i) p.prompts.push_back(oracle::to_mat(st.bank.prompts.slice(i), m, d));
    const std::vector<std::vector<std::size_t>> fixed{oracle::full_sort_top_c(p.z[0], p.keys, cfg.c)};

    const auto loss_of = [&](const oracle::ProblemInstance& q) {
      return oracle::full_loss(enc.weights(), q, cfg.c, cfg.tau, cfg.lambda_k, cfg.lambda_p,
                               oracle::Distance::kCosine, &fixed)
          .total;
    };
    const auto gk = oracle::numeric_gradient(
        [&](const oracle::Vec& v) {
          auto q = p;
          q.keys = oracle::to_mat(v, n, d);
          return loss_of(q);
        },
        oracle::flatten(p.keys));
    oracle::Vec pflat = copy(st.bank.prompts.values());
    const auto gp = oracle::numeric_gradient(
        [&](const oracle::Vec& v) {
          auto q = p;
          for (std::size_t i = 0; i < n; ++i) q.prompts[i] = oracle::to_mat(std::span(v).subspan(i * m * d), m, d);
          return loss_of(q);
        },
        pflat);
    const double lr = 0.01;
    const auto keys_want = oracle::sgd_rows(oracle::flatten(p.keys), gk, n, lr);
    const auto prompts_want = oracle::sgd_rows(pflat, gp, n, lr);

    ContinualTrainer trainer(enc, cfg);
    trainer.train_step(st, std::span(&s, 1), lr);
    for (std::size_t i = 0; i < keys_want.size(); ++i) CHECK(std::abs(st.bank.keys[i] - keys_want[i]) <= 1e-10);
    for (std::size_t i = 0; i < prompts_want.size(); ++i)
      CHECK(std::abs(st.bank.prompts[i] - prompts_want[i]) <= 1e-10);
  }
}

TEST_CASE("gradient routing: keys see only L_k, prompts only L_m and L_p") {
  const auto r = routing::check(31337, 50);
  CHECK(r.trials == 50);
  CHECK(r.max_key_diff <= 1e-12);
  CHECK(r.max_prompt_diff <= 1e-12);
  CHECK(r.unselected_zero);
}

TEST_CASE("sparse updates leave untouched parameters bit-identical") {
  const auto enc = tiny_encoders(3);
  const TaskStream stream = generate_synthetic(tiny_spec(3));
  for (double lp : {0.0, 0.3}) {
    TrainConfig cfg = tiny_config(3);
    cfg.lambda_p = lp;
    LearnerState st = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
    const Task& task = stream.tasks[0];
    for (std::size_t i = 0; i < task.classes.size(); ++i) st.register_class(task.classes[i], task.class_tokens[i]);
    const std::vector<ImageSample> batch(task.train.begin(), task.train.begin() + 3);
    std::vector<bool> selected(cfg.n, false);
    for (const auto& s : batch)
      for (std::size_t j : select_top_c(enc.image().encode(s), st.bank, cfg.c).indices) selected[j] = true;
    const AttributeBank before = st.bank;
    ContinualTrainer(enc, cfg).train_step(st, batch, 0.05);
    for (std::size_t j = 0; j < cfg.n; ++j) {
      if (selected[j]) continue;
      CHECK(bitwise_equal(st.bank.keys.slice(j), before.keys.slice(j)));
      if (lp == 0.0) CHECK(bitwise_equal(st.bank.prompts.slice(j), before.prompts.slice(j)));
    }
  }
}

TEST_CASE("with both auxiliary weights at zero and distinct selections, keys do not move") {
  const auto enc = tiny_encoders(5);
  const TaskStream stream = generate_synthetic(tiny_spec(5));
  TrainConfig cfg = tiny_config(5);
  cfg.lambda_k = 0.0;
  cfg.lambda_p = 0.0;
  LearnerState st = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
  const Task& task = stream.tasks[0];
  for (std::size_t i = 0; i < task.classes.size(); ++i) st.register_class(task.classes[i], task.class_tokens[i]);
  const Tensor keys = st.bank.keys;
  ContinualTrainer(enc, cfg).train_step(st, std::span(task.train).subspan(0, 1), 0.05);
  CHECK(bitwise_equal(st.bank.keys.values(), keys.values()));
}

TEST_CASE("shared-prompt baseline updates only its prompt") {
  const auto enc = tiny_encoders(6);
  const TaskStream stream = generate_synthetic(tiny_spec(6));
  TrainConfig cfg = tiny_config(6);
  LearnerState st = LearnerState::create(LearnerMode::kSharedPrompt, cfg, 8);
  const Task& task = stream.tasks[0];
  for (std::size_t i = 0; i < task.classes.size(); ++i) st.register_class(task.classes[i], task.class_tokens[i]);
  const Tensor before = st.shared_prompt;
  const auto loss = ContinualTrainer(enc, cfg).train_step(st, std::span(task.train).subspan(0, 4), 0.05);
  CHECK(loss.l_k == 0.0);
  CHECK(loss.l_p == 0.0);
  CHECK_FALSE(bitwise_equal(st.shared_prompt.values(), before.values()));
}

TEST_CASE("zero-shot has nothing to train and its rows never drift") {
  const auto enc = tiny_encoders(7);
  const TaskStream stream = generate_synthetic(tiny_spec(7));
  const TrainConfig cfg = tiny_config(7);
  ContinualTrainer trainer(enc, cfg);
  LearnerState st = LearnerState::create(LearnerMode::kZeroShot, cfg, 8);
  const auto m = trainer.run_sequence(st, stream);
  REQUIRE(m.rows_filled() == 3);
  // Each row is what a fresh, untrained learner scores on the classes seen so far.
  LearnerState fresh = LearnerState::create(LearnerMode::kZeroShot, cfg, 8);
  std::vector<ClassId> seen;
  for (std::size_t t = 0; t < 3; ++t) {
    const Task& task = stream.tasks[t];
    for (std::size_t i = 0; i < task.classes.size(); ++i) {
      fresh.register_class(task.classes[i], task.class_tokens[i]);
      seen.push_back(task.classes[i]);
    }
    for (std::size_t s = 0; s <= t; ++s)
      CHECK(m.at(t, s) == evaluate(enc, cfg, fresh, stream.tasks[s].test, seen));
  }
  CHECK_THROWS_AS(trainer.train_step(st, std::span(stream.tasks[0].train).subspan(0, 1), 0.1), ConfigError);
}

TEST_CASE("runs are deterministic and leave the encoders untouched") {
  const auto enc = tiny_encoders(8);
  const TaskStream stream = generate_synthetic(tiny_spec(8));
  const TrainConfig cfg = tiny_config(8);
  const auto before = enc.checksum();
  LearnerState a = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
  LearnerState b = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
  const auto ma = ContinualTrainer(enc, cfg).run_sequence(a, stream);
  const auto mb = ContinualTrainer(enc, cfg).run_sequence(b, stream);
  CHECK(ma == mb);
  CHECK(bitwise_equal(a.bank.keys.values(), b.bank.keys.values()));
  CHECK(bitwise_equal(a.bank.prompts.values(), b.bank.prompts.values()));
  CHECK(enc.checksum() == before);
  CHECK(a.tasks_completed == 3);
}

TEST_CASE("resuming from a partial matrix reproduces the straight run") {
  const auto enc = tiny_encoders(9);
  const TaskStream stream = generate_synthetic(tiny_spec(9));
  for (ScheduleScope scope : {ScheduleScope::kPerTask, ScheduleScope::kSequence}) {
    TrainConfig cfg = tiny_config(9);
    cfg.schedule = scope;
    ContinualTrainer trainer(enc, cfg);
    LearnerState straight = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
    const auto full = trainer.run_sequence(straight, stream);

    LearnerState st = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
    std::optional<AccuracyMatrix> saved;
    std::optional<LearnerState> saved_state;
    RunHooks hooks;
    hooks.after_task = [&](std::size_t t, const LearnerState& s, const AccuracyMatrix& m, const TaskReport&) {
      if (t == 0) {
        saved = m;
        saved_state = s;
      }
    };
    trainer.run_sequence(st, stream, hooks);
    LearnerState resumed = *saved_state;
    const auto rest = trainer.run_sequence(resumed, stream, {}, &*saved);
    CHECK(rest == full);
    CHECK(bitwise_equal(resumed.bank.prompts.values(), straight.bank.prompts.values()));
  }
}

TEST_CASE("sequential training forgets the first task") {
  // Shared-prompt baseline on disjoint tasks: accuracy on task 1 after the
  // last task is below its accuracy right after task 1.
  SyntheticSpec spec = tiny_spec(10);
  spec.num_tasks = 4;
  const auto enc = tiny_encoders(10);
  const TaskStream stream = generate_synthetic(spec);
  TrainConfig cfg = tiny_config(10);
  cfg.lr0 = 0.5;
  cfg.epochs_per_task = 5;
  LearnerState st = LearnerState::create(LearnerMode::kSharedPrompt, cfg, 8);
  const auto m = ContinualTrainer(enc, cfg).run_sequence(st, stream);
  CHECK(m.at(3, 0) < m.at(0, 0));
}

TEST_CASE("task validation") {
  const auto enc = tiny_encoders(11);
  const TaskStream stream = generate_synthetic(tiny_spec(11));
  const TrainConfig cfg = tiny_config(11);
  ContinualTrainer trainer(enc, cfg);
  LearnerState st = LearnerState::create(LearnerMode::kAttriClip, cfg, 8);
  trainer.train_task(st, stream.tasks[0]);
  CHECK_THROWS_AS(trainer.train_task(st, stream.tasks[0]), DataError);
  Task empty = stream.tasks[1];
  empty.train.clear();
  CHECK_THROWS_AS(trainer.train_task(st, empty), DataError);
  CHECK(trainer.steps_for(stream.tasks[1], LearnerMode::kAttriClip) == cfg.epochs_per_task * 3);
  CHECK(trainer.steps_for(stream.tasks[1], LearnerMode::kZeroShot) == 0);
}

TEST_CASE("config validation and JSON") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.c = 11;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.tau = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda_k = 0.25;
  c.distance.kind = DistanceKind::kMse;
  const nlohmann::json j = c;
  CHECK(j.get<TrainConfig>().lambda_k == 0.25);
  CHECK(j.get<TrainConfig>().distance.kind == DistanceKind::kMse);
  nlohmann::json bad = j;
  bad["learning_rate"] = 1.0;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ConfigError);
}
