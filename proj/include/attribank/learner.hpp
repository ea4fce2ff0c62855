// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attribank/autodiff.hpp"
#include "attribank/bank.hpp"
#include "attribank/encoders.hpp"
#include "attribank/objective.hpp"

#include <json.hpp>

namespace attribank {

enum class LearnerMode { kAttriClip, kSharedPrompt, kZeroShot };

std::string mode_name(LearnerMode mode);
LearnerMode parse_mode(const std::string& name);

/// Whether the cosine learning-rate schedule restarts per task or spans the
/// whole sequence.
enum class ScheduleScope { kPerTask, kSequence };

struct TrainConfig {
  std::size_t epochs_per_task = 10;
  std::size_t batch_size = 32;
  double lr0 = 0.001;
  double weight_decay = 0.0;
  double lambda_k = 0.7;
  double lambda_p = 0.3;
  std::size_t c = 3;
  std::size_t n = 10;
  std::size_t m = 12;
  double tau = 0.01;
  DistanceVariant distance;
  std::uint64_t seed = 0;
  ScheduleScope schedule = ScheduleScope::kPerTask;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Everything a learner trains or accumulates. Only the parameters of the
/// active mode are populated.
struct LearnerState {
  LearnerMode mode = LearnerMode::kAttriClip;
  AttributeBank bank;
  Tensor shared_prompt;  // (M, D), shared_prompt mode only
  std::vector<ClassId> class_order;
  std::map<ClassId, Tensor> class_tokens;
  std::uint64_t step_counter = 0;
  std::size_t tasks_completed = 0;

  static LearnerState create(LearnerMode mode, const TrainConfig& config, std::size_t dim);

  bool has_class(ClassId c) const { return class_tokens.count(c) != 0; }
  /// Appends a class; existing entries are never replaced.
  void register_class(ClassId c, const Tensor& token);
};

/// Image embeddings plus label positions within a candidate list.
struct EncodedBatch {
  std::vector<std::vector<double>> z;
  std::vector<std::size_t> labels;
};

struct ForwardResult {
  ad::Var l_m;
  ad::Var l_k;
  ad::Var l_p;
  ad::Var total;
  std::vector<Selection> selections;
};

/// Builds the full three-term objective for a batch. Selections are
/// recomputed from the current key values unless `fixed` is given.
/// `class_tokens[k]` is the token sequence of candidate k.
ForwardResult attriclip_forward(ad::Tape& tape, const TextEncoder& text, const TrainConfig& config, ad::Var keys,
                                ad::Var prompts, const EncodedBatch& batch,
                                std::span<const Tensor* const> class_tokens,
                                const std::vector<Selection>* fixed = nullptr);

/// Shared-prompt objective: cross-entropy with one global (M, D) prompt
/// prepended to every class token. l_k and l_p are constant zero.
ForwardResult shared_prompt_forward(ad::Tape& tape, const TextEncoder& text, double tau, ad::Var prompt,
                                    const EncodedBatch& batch, std::span<const Tensor* const> class_tokens);

/// Gradient-free text embeddings for the candidates of one image.
/// attriclip: selected prompts ++ class token; shared_prompt: prompt ++
/// class token; zero_shot: class token alone. `sel` is used only by
/// attriclip.
std::vector<std::vector<double>> candidate_text_embeddings(const TextEncoder& text, const LearnerState& state,
                                                           std::span<const ClassId> candidates,
                                                           const Selection* sel);

}  // namespace attribank
