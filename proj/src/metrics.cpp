// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/metrics.hpp"

#include <cmath>
#include <sstream>

#include "attribank/errors.hpp"

namespace attribank {

void AccuracyMatrix::append_row(std::vector<double> row) {
  const std::size_t t = rows_.size();
  if (t >= labels_.size()) throw DataError("accuracy matrix: all " + std::to_string(labels_.size()) + " rows filled");
  if (row.size() != t + 1)
    throw DataError("accuracy matrix: row " + std::to_string(t) + " needs " + std::to_string(t + 1) + " entries");
  for (double v : row)
    if (!(v >= 0.0 && v <= 100.0)) throw DataError("accuracy matrix: entry outside [0, 100]");
  rows_.push_back(std::move(row));
}

double AccuracyMatrix::at(std::size_t t, std::size_t s) const {
  if (t >= rows_.size() || s > t)
    throw DataError("accuracy matrix: entry (" + std::to_string(t) + "," + std::to_string(s) + ") undefined");
  return rows_[t][s];
}

double average_accuracy(const AccuracyMatrix& matrix, std::size_t t) {
  if (t < 1 || t > matrix.rows_filled())
    throw DataError("average_accuracy: t=" + std::to_string(t) + " outside [1, " +
                    std::to_string(matrix.rows_filled()) + "]");
  const auto& row = matrix.rows()[t - 1];
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

double final_average_accuracy(const AccuracyMatrix& matrix) { return average_accuracy(matrix, matrix.rows_filled()); }

double forward_transfer(const CdclReport& report) { return report.acc_a2b_on_b - report.acc_scratch_b; }
double backward_transfer(const CdclReport& report) { return report.acc_a2b_on_a - report.acc_scratch_a; }

nlohmann::json to_json(const AccuracyMatrix& m) {
  nlohmann::json avg = nlohmann::json::array();
  for (std::size_t t = 1; t <= m.rows_filled(); ++t) avg.push_back(average_accuracy(m, t));
  return {{"task_labels", m.task_labels()}, {"accuracy", m.rows()}, {"average_accuracy", avg}};
}

AccuracyMatrix accuracy_matrix_from_json(const nlohmann::json& j) {
  try {
    AccuracyMatrix m(j.at("task_labels").get<std::vector<std::string>>());
    for (const auto& row : j.at("accuracy")) m.append_row(row.get<std::vector<double>>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("accuracy matrix json: ") + e.what());
  }
}

std::string to_csv(const AccuracyMatrix& m, const std::string& run_label) {
  std::ostringstream os;
  os.precision(6);
  os << "run";
  for (std::size_t t = 1; t <= m.num_tasks(); ++t) os << ",Task " << t;
  os << "\n" << run_label;
  for (std::size_t t = 1; t <= m.num_tasks(); ++t) {
    os << ",";
    if (t <= m.rows_filled()) os << average_accuracy(m, t);
  }
  os << "\n";
  return os.str();
}

nlohmann::json to_json(const CdclReport& r) {
  return {{"mode", r.mode},         {"memory", 0},
          {"acc_scratch_a", r.acc_scratch_a}, {"acc_scratch_b", r.acc_scratch_b},
          {"acc_a2b_on_a", r.acc_a2b_on_a},   {"acc_a2b_on_b", r.acc_a2b_on_b},
          {"acc_joint", r.acc_joint},         {"ft", r.ft},
          {"bt", r.bt}};
}

CdclReport cdcl_report_from_json(const nlohmann::json& j) {
  try {
    CdclReport r;
    r.mode = j.at("mode").get<std::string>();
    r.acc_scratch_a = j.at("acc_scratch_a").get<double>();
    r.acc_scratch_b = j.at("acc_scratch_b").get<double>();
    r.acc_a2b_on_a = j.at("acc_a2b_on_a").get<double>();
    r.acc_a2b_on_b = j.at("acc_a2b_on_b").get<double>();
    r.acc_joint = j.at("acc_joint").get<double>();
    r.ft = j.at("ft").get<double>();
    r.bt = j.at("bt").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("cdcl report json: ") + e.what());
  }
}

}  // namespace attribank
