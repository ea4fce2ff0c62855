// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "attribank/autodiff.hpp"
#include "attribank/objective.hpp"

namespace attribank {

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  std::size_t n = 4;      // bank size
  std::size_t m = 3;      // prompt length
  std::size_t d = 16;     // embedding width
  std::size_t k = 3;      // candidate classes
  std::size_t batch = 2;
  std::size_t c = 2;      // selected keys per image
  DistanceVariant distance;
  double lambda_k = 0.7;
  double lambda_p = 0.3;
  double tau = 0.01;
  double h = 1e-6;
  double tolerance = 1e-4;
  /// Negative control: perturbs one analytic key-gradient coordinate.
  bool corrupt_gradient = false;

  void validate() const;
};

struct GradGroupResult {
  std::string group;  // "keys", "prompts" or "shared_prompt"
  ad::GradCheckReport report;
  bool passed = false;
};

/// Checks the analytic gradients of the full objective against central
/// differences for the keys, the prompt bank and the shared-prompt
/// baseline. Selections are computed once and held fixed while probing.
std::vector<GradGroupResult> run_gradient_suite(const GradSuiteOptions& options);

}  // namespace attribank
