// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/dataset.hpp"

#include <algorithm>
#include <set>

#include "attribank/errors.hpp"

namespace attribank {

const Tensor& Task::token_of(ClassId c) const {
  auto it = std::find(classes.begin(), classes.end(), c);
  if (it == classes.end()) throw DataError("task " + std::to_string(id) + ": unknown class " + std::to_string(c));
  return class_tokens[static_cast<std::size_t>(it - classes.begin())];
}

std::vector<ClassId> TaskStream::all_classes() const {
  std::vector<ClassId> out;
  for (const Task& t : tasks) out.insert(out.end(), t.classes.begin(), t.classes.end());
  return out;
}

std::vector<ImageSample> TaskStream::all_test_samples() const {
  std::vector<ImageSample> out;
  for (const Task& t : tasks) out.insert(out.end(), t.test.begin(), t.test.end());
  return out;
}

void TaskStream::validate() const {
  if (tasks.empty()) throw DataError("stream '" + name + "': no tasks");
  std::set<ClassId> seen;
  for (const Task& t : tasks) {
    if (t.classes.size() != t.class_tokens.size())
      throw DataError("task " + std::to_string(t.id) + ": class/token count mismatch");
    for (std::size_t i = 0; i < t.classes.size(); ++i) {
      if (!seen.insert(t.classes[i]).second)
        throw DataError("stream '" + name + "': class " + std::to_string(t.classes[i]) + " appears in two tasks");
      const Tensor& tok = t.class_tokens[i];
      if (tok.rank() != 2 || tok.dim(1) != token_dim)
        throw DataError("task " + std::to_string(t.id) + ": class token shape " + shape_str(tok.shape()) +
                        " incompatible with token dimension " + std::to_string(token_dim));
    }
    for (const auto* split : {&t.train, &t.test})
      for (const ImageSample& s : *split) {
        if (std::find(t.classes.begin(), t.classes.end(), s.label) == t.classes.end())
          throw DataError("task " + std::to_string(t.id) + ": sample label " + std::to_string(s.label) +
                          " is not one of the task's classes");
        if (!s.features.empty() && s.features.size() != input_width)
          throw DataError("task " + std::to_string(t.id) + ": sample width " + std::to_string(s.features.size()) +
                          " differs from stream width " + std::to_string(input_width));
      }
  }
}

void check_disjoint_classes(const TaskStream& a, const TaskStream& b) {
  const auto ca = a.all_classes();
  const std::set<ClassId> sa(ca.begin(), ca.end());
  for (ClassId c : b.all_classes())
    if (sa.count(c))
      throw DataError("streams '" + a.name + "' and '" + b.name + "' share class id " + std::to_string(c));
}

}  // namespace attribank
