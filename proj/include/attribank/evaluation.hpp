// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attribank/dataset.hpp"
#include "attribank/encoders.hpp"
#include "attribank/learner.hpp"
#include "attribank/metrics.hpp"

namespace attribank {

/// Argmax over candidates of the cosine logit for each sample; ties go to
/// the smaller class id so candidate order never matters.
std::vector<ClassId> predict(const FrozenEncoderPair& encoders, const TrainConfig& config, const LearnerState& state,
                             std::span<const ImageSample> samples, std::span<const ClassId> candidates,
                             std::size_t threads = 1);

/// Percent of samples whose prediction equals the label.
double evaluate(const FrozenEncoderPair& encoders, const TrainConfig& config, const LearnerState& state,
                std::span<const ImageSample> samples, std::span<const ClassId> candidates, std::size_t threads = 1);

/// Mean of |cos(g(P_i), g(P_j))| over unordered prompt pairs; 0 when N = 1.
double mean_prompt_abs_cosine(const TextEncoder& text, const AttributeBank& bank);

struct CdclOutcome {
  CdclReport report;
  AccuracyMatrix scratch_a;
  AccuracyMatrix scratch_b;
  AccuracyMatrix a_then_b;  // the B leg of the sequential run
};

/// Trains from scratch on A, from scratch on B, and A then B; evaluates each
/// dataset over its own classes and the union over all classes.
CdclOutcome run_cdcl(const FrozenEncoderPair& encoders, const TrainConfig& config, LearnerMode mode,
                     const TaskStream& a, const TaskStream& b, std::size_t threads = 1);

}  // namespace attribank
