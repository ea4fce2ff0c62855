// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "attribank/encoders.hpp"
#include "attribank/tensor.hpp"

namespace attribank {

/// One incremental task: its classes (with their class-name tokens, each
/// (1, D)) and disjoint train/test samples.
struct Task {
  std::uint32_t id = 0;
  std::vector<ClassId> classes;
  std::vector<Tensor> class_tokens;
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;

  const Tensor& token_of(ClassId c) const;
};

/// Ordered tasks with pairwise disjoint class sets.
struct TaskStream {
  std::string name;
  std::size_t input_width = 0;
  std::size_t token_dim = 0;
  std::vector<Task> tasks;

  std::vector<ClassId> all_classes() const;
  std::vector<ImageSample> all_test_samples() const;
  /// Checks class disjointness, label membership, token shapes and widths.
  void validate() const;
};

/// Rejects two streams that share a class id.
void check_disjoint_classes(const TaskStream& a, const TaskStream& b);

}  // namespace attribank
