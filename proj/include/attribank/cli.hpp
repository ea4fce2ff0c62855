// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attribank/data_io.hpp"
#include "attribank/encoders.hpp"
#include "attribank/evaluation.hpp"
#include "attribank/learner.hpp"
#include "attribank/metrics.hpp"
#include "attribank/trainer.hpp"

#include <json.hpp>

namespace attribank::cli {

enum ExitCode : int { kOk = 0, kConfigFailure = 1, kDataFailure = 2, kNumericFailure = 3 };

/// Where a task stream comes from. Exactly one of the three is set.
struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  bool synthetic_seed_given = false;
  bool synthetic_shared_seed_given = false;

  std::optional<std::string> embeddings_train;  // resolved against the config directory
  std::optional<std::string> embeddings_test;
  std::size_t holdout_every = 5;

  /// Second CDCL stream only: the first stream with labels shifted past it.
  bool copy_of_a = false;
  std::optional<ClassId> copy_offset;
};

struct EncoderSettings {
  bool aligned_towers = false;
  std::size_t max_positions = 256;
  std::optional<std::size_t> dim;  // must agree with the data when given
};

struct RunConfig {
  std::uint64_t seed = 1;
  LearnerMode mode = LearnerMode::kAttriClip;
  TrainConfig train;
  EncoderSettings encoder;
  std::optional<DataSource> data;    // train, sweep
  std::optional<DataSource> data_a;  // cdcl
  std::optional<DataSource> data_b;
};

/// Parses a run config; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

/// Sets the run seed and propagates it to the trainer and encoders.
void apply_seed(RunConfig& config, std::uint64_t seed);

/// Builds stream `index` (0 for data or data_a, 1 for data_b). Synthetic
/// seeds not fixed in the config derive from the run seed.
TaskStream load_stream(const RunConfig& config, const DataSource& source, std::size_t index,
                       const TaskStream* first = nullptr);
FrozenEncoderPair make_encoders(const RunConfig& config, const TaskStream& stream);

/// Positive integer from ATTRIBANK_THREADS, 1 when unset.
std::size_t threads_from_env();

struct TrainOutcome {
  AccuracyMatrix matrix;
  LearnerState state;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
  bool completed = false;  // false when stopped early
};

struct TrainOptions {
  std::string out_dir;  // empty: nothing written
  bool resume = false;
  std::optional<std::size_t> stop_after;  // tasks to train before stopping
  std::size_t threads = 1;
  bool quiet = false;  // no per-task progress lines on stdout
};

/// Runs a continual sequence and, when out_dir is set, writes the run
/// directory: manifest.json, metrics.json, accuracy_matrix.{json,csv},
/// tasks/task_<t>.json and checkpoints/task_<t>.ckpt.
TrainOutcome execute_train(const RunConfig& config, const TrainOptions& options);

/// The byte-stable metrics document of a finished run.
nlohmann::json metrics_json(const RunConfig& config, const TrainOutcome& outcome, const FrozenEncoderPair& encoders);

struct CdclRun {
  std::vector<CdclReport> reports;
};

CdclRun execute_cdcl(const RunConfig& config, const std::vector<LearnerMode>& modes, std::size_t threads);
std::string cdcl_table_csv(const std::vector<CdclReport>& reports);

struct SweepRow {
  std::string value;
  std::optional<double> final_average_accuracy;
  std::string error;
};

/// Applies one sweep value to a copy of the config. Throws ConfigError for
/// an unknown axis or an unparsable value.
RunConfig apply_axis(const RunConfig& config, const std::string& axis, const std::string& value);
void check_axis(const std::string& axis);

struct FixtureRow {
  std::string table;
  std::string method;
  double printed = 0.0;
  double recomputed = 0.0;
  bool matches = false;
  /// Printed value known not to match its own table; reported, not fatal.
  bool known_discrepancy = false;
  std::string note;
};

/// Recomputes FT, BT, the average-accuracy columns and any textual gap
/// claims of the bundled transcriptions; `tolerance` absorbs table rounding.
std::vector<FixtureRow> check_fixture_tables(const nlohmann::json& fixtures, double tolerance = 0.05);

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::optional<std::string>& mode,
              std::optional<std::uint64_t> seed, bool resume, std::optional<std::size_t> stop_after);
int cmd_cdcl(const std::string& config_path, const std::string& out_dir, const std::optional<std::string>& mode,
             std::optional<std::uint64_t> seed, const std::string& format);
int cmd_gradcheck(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t d, std::size_t k,
                  const std::string& distance, bool corrupt);
int cmd_sweep(const std::string& config_path, const std::string& axis, const std::string& values,
              const std::string& out_dir, std::optional<std::uint64_t> seed, const std::string& format);
int cmd_report(const std::vector<std::string>& run_dirs, const std::optional<std::string>& fixtures,
               const std::string& format, const std::string& out_dir);

/// Full command-line entry point; maps failures to exit codes.
int run(int argc, char** argv);

}  // namespace attribank::cli
