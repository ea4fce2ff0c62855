// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "attribank/dataset.hpp"
#include "attribank/encoders.hpp"
#include "attribank/learner.hpp"
#include "attribank/metrics.hpp"

#include <json.hpp>

namespace attribank {

/// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double lr_at(std::size_t step, std::size_t total_steps, double lr0);

struct TaskReport {
  std::uint32_t task_id = 0;
  std::size_t steps = 0;
  std::vector<LossBreakdown> epoch_losses;  // mean of the pre-step losses per epoch
  std::vector<double> lr_trace;
  std::vector<std::size_t> selection_histogram;  // attriclip: hits per bank entry
};

nlohmann::json to_json(const TaskReport& r);

/// Position of a task's steps inside the learning-rate schedule.
struct ScheduleWindow {
  std::size_t offset = 0;
  std::size_t total = 0;
};

struct RunHooks {
  /// Called after task t is trained and row t of the matrix is filled.
  std::function<void(std::size_t t, const LearnerState&, const AccuracyMatrix&, const TaskReport&)> after_task;
  /// Called whenever a training sample is read: (stream task index, sample index).
  std::function<void(std::size_t t, std::size_t sample)> on_train_access;
};

/// Task-sequential SGD over the learner's trainable parameters.
class ContinualTrainer {
 public:
  ContinualTrainer(const FrozenEncoderPair& encoders, TrainConfig config);

  const TrainConfig& config() const noexcept { return config_; }
  const FrozenEncoderPair& encoders() const noexcept { return encoders_; }
  void set_eval_threads(std::size_t threads) noexcept { eval_threads_ = threads == 0 ? 1 : threads; }
  std::size_t eval_threads() const noexcept { return eval_threads_; }

  /// Optimizer steps train_task performs for this task in the given mode.
  std::size_t steps_for(const Task& task, LearnerMode mode) const;

  /// One forward/backward and one SGD step at rate lr. Dispatches on mode;
  /// zero_shot has nothing to train and is rejected. Returns pre-step losses.
  LossBreakdown train_step(LearnerState& state, std::span<const ImageSample> batch, double lr) const;
  LossBreakdown attriclip_step(LearnerState& state, std::span<const ImageSample> batch, double lr) const;
  LossBreakdown shared_prompt_baseline_step(LearnerState& state, std::span<const ImageSample> batch,
                                            double lr) const;

  /// Registers the task's classes, then runs epochs_per_task shuffled passes.
  /// Without a window the cosine schedule spans this task only.
  TaskReport train_task(LearnerState& state, const Task& task, std::optional<ScheduleWindow> window = {},
                        const RunHooks* hooks = nullptr, std::size_t stream_index = 0) const;

  /// Trains the stream's tasks in order, evaluating every seen task after
  /// each one over all registered classes. Resumes after the rows already
  /// present in `partial` when given.
  AccuracyMatrix run_sequence(LearnerState& state, const TaskStream& stream, const RunHooks& hooks = {},
                              const AccuracyMatrix* partial = nullptr) const;

 private:
  EncodedBatch encode_batch(const LearnerState& state, std::span<const ImageSample> batch) const;

  const FrozenEncoderPair& encoders_;
  TrainConfig config_;
  std::size_t eval_threads_ = 1;
};

}  // namespace attribank
