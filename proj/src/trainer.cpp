// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "attribank/errors.hpp"
#include "attribank/evaluation.hpp"
#include "attribank/rng.hpp"

namespace attribank {

double lr_at(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps < 1 || step > total_steps)
    throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

nlohmann::json to_json(const TaskReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& l : r.epoch_losses)
    epochs.push_back({{"l_m", l.l_m}, {"l_k", l.l_k}, {"l_p", l.l_p}, {"total", l.total}});
  return {{"task_id", r.task_id},
          {"steps", r.steps},
          {"epoch_losses", epochs},
          {"lr_trace", r.lr_trace},
          {"selection_histogram", r.selection_histogram}};
}

namespace {

std::size_t count_nonfinite(std::span<const double> v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }));
}

[[noreturn]] void numeric_failure(const LossBreakdown& l, std::initializer_list<std::pair<const char*, const Tensor*>> ts) {
  std::ostringstream os;
  os << "train_step: non-finite loss (l_m=" << l.l_m << " l_k=" << l.l_k << " l_p=" << l.l_p
     << " total=" << l.total << ")";
  for (const auto& [name, t] : ts) {
    if (!t || t->numel() == 0) continue;
    os << "; " << name << shape_str(t->shape()) << " non-finite values=" << count_nonfinite(t->values());
    if (t->has_grad()) os << " grads=" << count_nonfinite(t->grad());
  }
  throw NumericError(os.str());
}

/// p -= lr * (g + wd * p) on every axis-0 slice whose gradient is nonzero.
void sgd_update(Tensor& p, double lr, double weight_decay) {
  if (!p.has_grad()) return;
  const auto g = p.grad();
  const std::size_t slices = p.dim(0);
  const std::size_t stride = p.numel() / slices;
  auto v = p.values();
  for (std::size_t i = 0; i < slices; ++i) {
    const auto gs = g.subspan(i * stride, stride);
    if (std::all_of(gs.begin(), gs.end(), [](double x) { return x == 0.0; })) continue;
    for (std::size_t k = 0; k < stride; ++k) {
      double& x = v[i * stride + k];
      x -= lr * (gs[k] + weight_decay * x);
    }
  }
  p.clear_grad();
}

std::vector<const Tensor*> registry_tokens(const LearnerState& state) {
  std::vector<const Tensor*> out;
  out.reserve(state.class_order.size());
  for (ClassId c : state.class_order) out.push_back(&state.class_tokens.at(c));
  return out;
}

}  // namespace

ContinualTrainer::ContinualTrainer(const FrozenEncoderPair& encoders, TrainConfig config)
    : encoders_(encoders), config_(std::move(config)) {
  config_.validate();
}

std::size_t ContinualTrainer::steps_for(const Task& task, LearnerMode mode) const {
  if (mode == LearnerMode::kZeroShot) return 0;
  const std::size_t per_epoch = (task.train.size() + config_.batch_size - 1) / config_.batch_size;
  return config_.epochs_per_task * per_epoch;
}

EncodedBatch ContinualTrainer::encode_batch(const LearnerState& state, std::span<const ImageSample> batch) const {
  if (batch.empty()) throw DataError("train_step: empty batch");
  EncodedBatch eb;
  for (const ImageSample& s : batch) {
    auto it = std::find(state.class_order.begin(), state.class_order.end(), s.label);
    if (it == state.class_order.end())
      throw DataError("train_step: label " + std::to_string(s.label) + " is not a registered class");
    eb.z.push_back(encoders_.image().encode(s));
    eb.labels.push_back(static_cast<std::size_t>(it - state.class_order.begin()));
  }
  return eb;
}

LossBreakdown ContinualTrainer::train_step(LearnerState& state, std::span<const ImageSample> batch, double lr) const {
  switch (state.mode) {
    case LearnerMode::kAttriClip:
      return attriclip_step(state, batch, lr);
    case LearnerMode::kSharedPrompt:
      return shared_prompt_baseline_step(state, batch, lr);
    case LearnerMode::kZeroShot:
      break;
  }
  throw ConfigError("train_step: zero_shot learner has no trainable parameters");
}

LossBreakdown ContinualTrainer::attriclip_step(LearnerState& state, std::span<const ImageSample> batch,
                                               double lr) const {
  if (state.mode != LearnerMode::kAttriClip) throw ConfigError("attriclip_step: learner is not in attriclip mode");
  const EncodedBatch eb = encode_batch(state, batch);
  const auto tokens = registry_tokens(state);
  AttributeBank& bank = state.bank;
  bank.keys.clear_grad();
  bank.prompts.clear_grad();

  ad::Tape tape;
  ad::Var keys = tape.parameter(bank.keys);
  ad::Var prompts = tape.parameter(bank.prompts);
  const ForwardResult fwd = attriclip_forward(tape, encoders_.text(), config_, keys, prompts, eb, tokens);
  const LossBreakdown losses =
      LossBreakdown::combine(tape.value(fwd.l_m).item(), tape.value(fwd.l_k).item(), tape.value(fwd.l_p).item(),
                             config_.lambda_k, config_.lambda_p, config_.tau);
  if (!std::isfinite(tape.value(fwd.total).item())) numeric_failure(losses, {{"keys", &bank.keys}, {"prompts", &bank.prompts}});
  tape.backward(fwd.total);
  if (count_nonfinite(bank.keys.grad()) || count_nonfinite(bank.prompts.grad()))
    numeric_failure(losses, {{"keys", &bank.keys}, {"prompts", &bank.prompts}});

  sgd_update(bank.keys, lr, config_.weight_decay);
  sgd_update(bank.prompts, lr, config_.weight_decay);
  bank.check_key_norms();
  ++state.step_counter;
  return losses;
}

LossBreakdown ContinualTrainer::shared_prompt_baseline_step(LearnerState& state, std::span<const ImageSample> batch,
                                                            double lr) const {
  if (state.mode != LearnerMode::kSharedPrompt)
    throw ConfigError("shared_prompt_baseline_step: learner is not in shared_prompt mode");
  const EncodedBatch eb = encode_batch(state, batch);
  const auto tokens = registry_tokens(state);
  state.shared_prompt.clear_grad();

  ad::Tape tape;
  ad::Var prompt = tape.parameter(state.shared_prompt);
  const ForwardResult fwd = shared_prompt_forward(tape, encoders_.text(), config_.tau, prompt, eb, tokens);
  const LossBreakdown losses = LossBreakdown::combine(tape.value(fwd.l_m).item(), 0.0, 0.0, 0.0, 0.0, config_.tau);
  if (!std::isfinite(losses.total)) numeric_failure(losses, {{"shared_prompt", &state.shared_prompt}});
  tape.backward(fwd.total);
  if (count_nonfinite(state.shared_prompt.grad())) numeric_failure(losses, {{"shared_prompt", &state.shared_prompt}});

  // The prompt is one parameter: update it whole unless its gradient vanished.
  const auto g = state.shared_prompt.grad();
  if (std::any_of(g.begin(), g.end(), [](double x) { return x != 0.0; })) {
    auto v = state.shared_prompt.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * (g[i] + config_.weight_decay * v[i]);
  }
  state.shared_prompt.clear_grad();
  ++state.step_counter;
  return losses;
}

TaskReport ContinualTrainer::train_task(LearnerState& state, const Task& task, std::optional<ScheduleWindow> window,
                                        const RunHooks* hooks, std::size_t stream_index) const {
  if (task.train.empty()) throw DataError("train_task: task " + std::to_string(task.id) + " has no training samples");
  if (task.classes.size() != task.class_tokens.size())
    throw DataError("train_task: task " + std::to_string(task.id) + " class/token count mismatch");
  for (ClassId c : task.classes)
    if (state.has_class(c))
      throw DataError("train_task: class " + std::to_string(c) + " of task " + std::to_string(task.id) +
                      " was already learned in an earlier task");
  for (const ImageSample& s : task.train)
    if (std::find(task.classes.begin(), task.classes.end(), s.label) == task.classes.end())
      throw DataError("train_task: sample label " + std::to_string(s.label) + " is not a class of task " +
                      std::to_string(task.id));

  for (std::size_t i = 0; i < task.classes.size(); ++i) state.register_class(task.classes[i], task.class_tokens[i]);

  TaskReport report;
  report.task_id = task.id;
  if (state.mode == LearnerMode::kAttriClip) report.selection_histogram.assign(state.bank.n(), 0);
  const std::size_t steps = steps_for(task, state.mode);
  if (steps == 0) {
    ++state.tasks_completed;
    return report;
  }
  const ScheduleWindow win = window.value_or(ScheduleWindow{0, steps});

  const std::size_t n = task.train.size();
  std::vector<std::size_t> order(n);
  std::vector<ImageSample> batch;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config_.epochs_per_task; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config_.seed, {0x5B0F, state.tasks_completed, epoch}));
    rng.shuffle(std::span<std::size_t>(order));
    LossBreakdown acc{};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config_.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(n, start + config_.batch_size); ++k) {
        if (hooks && hooks->on_train_access) hooks->on_train_access(stream_index, order[k]);
        batch.push_back(task.train[order[k]]);
      }
      const double lr = lr_at(win.offset + step, win.total, config_.lr0);
      report.lr_trace.push_back(lr);
      if (state.mode == LearnerMode::kAttriClip) {
        for (const ImageSample& s : batch) {
          const Selection sel = select_top_c(encoders_.image().encode(s), state.bank, config_.c);
          for (std::size_t j : sel.indices) ++report.selection_histogram[j];
        }
      }
      const LossBreakdown l = train_step(state, batch, lr);
      acc.l_m += l.l_m;
      acc.l_k += l.l_k;
      acc.l_p += l.l_p;
      ++batches;
      ++step;
    }
    const double b = static_cast<double>(batches);
    report.epoch_losses.push_back(
        LossBreakdown::combine(acc.l_m / b, acc.l_k / b, acc.l_p / b, config_.lambda_k, config_.lambda_p, config_.tau));
  }
  report.steps = step;
  ++state.tasks_completed;
  return report;
}

AccuracyMatrix ContinualTrainer::run_sequence(LearnerState& state, const TaskStream& stream, const RunHooks& hooks,
                                              const AccuracyMatrix* partial) const {
  stream.validate();
  std::vector<std::string> labels;
  for (const Task& t : stream.tasks) labels.push_back("Task " + std::to_string(t.id + 1));
  AccuracyMatrix matrix = partial ? *partial : AccuracyMatrix(labels);
  if (matrix.task_labels() != labels) throw DataError("run_sequence: partial matrix does not match the stream");

  std::vector<std::size_t> task_steps;
  for (const Task& t : stream.tasks) task_steps.push_back(steps_for(t, state.mode));
  const std::size_t total_steps = std::accumulate(task_steps.begin(), task_steps.end(), std::size_t{0});

  for (std::size_t t = matrix.rows_filled(); t < stream.tasks.size(); ++t) {
    std::optional<ScheduleWindow> window;
    if (config_.schedule == ScheduleScope::kSequence && total_steps > 0) {
      const std::size_t offset =
          std::accumulate(task_steps.begin(), task_steps.begin() + static_cast<std::ptrdiff_t>(t), std::size_t{0});
      window = ScheduleWindow{offset, total_steps};
    }
    const TaskReport report = train_task(state, stream.tasks[t], window, &hooks, t);
    std::vector<double> row;
    for (std::size_t s = 0; s <= t; ++s)
      row.push_back(evaluate(encoders_, config_, state, stream.tasks[s].test, state.class_order, eval_threads_));
    matrix.append_row(std::move(row));
    if (hooks.after_task) hooks.after_task(t, state, matrix, report);
  }
  return matrix;
}

}  // namespace attribank
