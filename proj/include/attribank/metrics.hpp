// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace attribank {

/// a[t][s]: test accuracy (percent) on task s after training task t, s <= t.
/// Rows are appended as tasks complete; indices here are 0-based.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::vector<std::string> task_labels) : labels_(std::move(task_labels)) {}

  std::size_t num_tasks() const noexcept { return labels_.size(); }
  std::size_t rows_filled() const noexcept { return rows_.size(); }
  const std::vector<std::string>& task_labels() const noexcept { return labels_; }
  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }

  /// Appends row t = rows_filled(); it must hold exactly t+1 entries in [0, 100].
  void append_row(std::vector<double> row);
  double at(std::size_t t, std::size_t s) const;
  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> rows_;
};

/// Mean of a[t][1..t], with 1-based t as in results tables.
double average_accuracy(const AccuracyMatrix& matrix, std::size_t t);
/// average_accuracy at the last filled row.
double final_average_accuracy(const AccuracyMatrix& matrix);

/// Cross-dataset continual learning quantities; all accuracies in percent.
struct CdclReport {
  std::string mode;
  double acc_scratch_a = 0.0;
  double acc_scratch_b = 0.0;
  double acc_a2b_on_a = 0.0;
  double acc_a2b_on_b = 0.0;
  double acc_joint = 0.0;
  double ft = 0.0;
  double bt = 0.0;
};

/// acc_a2b_on_b - acc_scratch_b; positive means the first dataset helped.
double forward_transfer(const CdclReport& report);
/// acc_a2b_on_a - acc_scratch_a; positive means the second dataset helped.
double backward_transfer(const CdclReport& report);

nlohmann::json to_json(const AccuracyMatrix& m);
AccuracyMatrix accuracy_matrix_from_json(const nlohmann::json& j);
/// One header row (run, Task 1..T) and one data row of running average
/// accuracies, the layout of an average-accuracy results table.
std::string to_csv(const AccuracyMatrix& m, const std::string& run_label);

nlohmann::json to_json(const CdclReport& r);
CdclReport cdcl_report_from_json(const nlohmann::json& j);

}  // namespace attribank
