// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "attribank/errors.hpp"
#include "attribank/gradcheck.hpp"
#include "attribank/rng.hpp"
#include "byte_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace attribank::cli {

namespace {

constexpr std::uint64_t kStreamSeedTag = 0xDA7A;
constexpr std::uint64_t kSharedSeedTag = 0x5EED;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).string();
}

DataSource parse_source(const json& j, const fs::path& base, const std::string& where, bool allow_copy) {
  reject_unknown(j, {"synthetic", "embeddings", "copy_of_a", "class_offset"}, where);
  DataSource s;
  int kinds = 0;
  if (j.contains("synthetic")) {
    ++kinds;
    s.synthetic = j.at("synthetic").get<SyntheticSpec>();
    s.synthetic_seed_given = j.at("synthetic").contains("seed");
    s.synthetic_shared_seed_given = j.at("synthetic").contains("shared_seed");
  }
  if (j.contains("embeddings")) {
    ++kinds;
    const json& e = j.at("embeddings");
    reject_unknown(e, {"train", "test", "holdout_every"}, where + ".embeddings");
    if (!e.contains("train")) throw ConfigError(where + ".embeddings: 'train' path is required");
    s.embeddings_train = resolve(base, e.at("train").get<std::string>());
    if (e.contains("test")) s.embeddings_test = resolve(base, e.at("test").get<std::string>());
    if (e.contains("holdout_every")) s.holdout_every = e.at("holdout_every").get<std::size_t>();
  }
  if (j.value("copy_of_a", false)) {
    if (!allow_copy) throw ConfigError(where + ": copy_of_a is only valid for data_b");
    ++kinds;
    s.copy_of_a = true;
    if (j.contains("class_offset")) s.copy_offset = j.at("class_offset").get<ClassId>();
  } else if (j.contains("class_offset")) {
    throw ConfigError(where + ": class_offset belongs inside the synthetic block or next to copy_of_a");
  }
  if (kinds != 1) throw ConfigError(where + ": specify exactly one of synthetic, embeddings or copy_of_a");
  return s;
}

json source_json(const DataSource& s) {
  if (s.synthetic) return {{"synthetic", *s.synthetic}};
  if (s.copy_of_a) {
    json j{{"copy_of_a", true}};
    if (s.copy_offset) j["class_offset"] = *s.copy_offset;
    return j;
  }
  json e{{"train", *s.embeddings_train}, {"holdout_every", s.holdout_every}};
  if (s.embeddings_test) e["test"] = *s.embeddings_test;
  return {{"embeddings", e}};
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const auto* p = reinterpret_cast<const std::byte*>(text.data());
  detail::write_file_atomic(path.string(), std::span<const std::byte>(p, text.size()));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Content hash of the resolved config plus every input file it reads.
std::uint64_t input_hash(const RunConfig& config) {
  const std::string dump = to_json(config).dump();
  std::uint64_t h = fnv1a64(std::as_bytes(std::span(dump.data(), dump.size())));
  for (const auto* src : {&config.data, &config.data_a, &config.data_b}) {
    if (!*src) continue;
    for (const auto* p : {&(*src)->embeddings_train, &(*src)->embeddings_test}) {
      if (!*p) continue;
      const auto bytes = detail::read_file_bytes(**p);
      h = fnv1a64(bytes, h);
    }
  }
  return h;
}

json manifest(const std::string& command, const RunConfig& config, const std::string& started,
              const std::vector<std::string>& outputs) {
  return {{"command", command},
          {"config", to_json(config)},
          {"seed", config.seed},
          {"input_hash", hex64(input_hash(config))},
          {"started_at", started},
          {"finished_at", utc_now()},
          {"outputs", outputs}};
}

TaskStream offset_copy(const TaskStream& a, std::optional<ClassId> offset) {
  ClassId shift = 0;
  if (offset) {
    shift = *offset;
  } else {
    for (ClassId c : a.all_classes()) shift = std::max<ClassId>(shift, c + 1);
  }
  TaskStream b = a;
  b.name = a.name + "_copy";
  for (auto& task : b.tasks) {
    for (auto& c : task.classes) c += shift;
    for (auto* split : {&task.train, &task.test})
      for (auto& s : *split) s.label += shift;
  }
  check_disjoint_classes(a, b);
  return b;
}

std::string format_pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::string format_signed(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << std::showpos << v;
  return os.str();
}

void print_aligned(std::ostream& os, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      os << std::left << std::setw(static_cast<int>(width[i])) << r[i];
      if (i + 1 < r.size()) os << "  ";
    }
    os << "\n";
  }
}

std::string to_csv_rows(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << "\n";
  }
  return os.str();
}

void check_format(const std::string& format, bool allow_text) {
  if (format == "csv" || format == "json" || (allow_text && format == "text")) return;
  throw ConfigError("--format must be csv or json" + std::string(allow_text ? " (or text)" : ""));
}

struct StopRequested {};

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"seed", "mode", "train", "encoder", "data", "data_a", "data_b"}, "config");
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("train")) {
      if (j.at("train").contains("seed"))
        throw ConfigError("config.train: the seed is set once at the top level");
      c.train = j.at("train").get<TrainConfig>();
    }
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      reject_unknown(e, {"aligned_towers", "max_positions", "dim"}, "config.encoder");
      c.encoder.aligned_towers = e.value("aligned_towers", false);
      c.encoder.max_positions = e.value("max_positions", std::size_t{256});
      if (e.contains("dim")) c.encoder.dim = e.at("dim").get<std::size_t>();
    }
    if (j.contains("data")) c.data = parse_source(j.at("data"), base_dir, "config.data", false);
    if (j.contains("data_a")) c.data_a = parse_source(j.at("data_a"), base_dir, "config.data_a", false);
    if (j.contains("data_b")) c.data_b = parse_source(j.at("data_b"), base_dir, "config.data_b", true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  apply_seed(c, c.seed);
  c.train.validate();
  for (const auto* s : {&c.data, &c.data_a, &c.data_b})
    if (*s && (*s)->synthetic) (*s)->synthetic->validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j, fs::path(path).parent_path());
}

json to_json(const RunConfig& c) {
  json train = c.train;
  train.erase("seed");
  json enc{{"aligned_towers", c.encoder.aligned_towers}, {"max_positions", c.encoder.max_positions}};
  if (c.encoder.dim) enc["dim"] = *c.encoder.dim;
  json j{{"seed", c.seed}, {"mode", mode_name(c.mode)}, {"train", train}, {"encoder", enc}};
  if (c.data) j["data"] = source_json(*c.data);
  if (c.data_a) j["data_a"] = source_json(*c.data_a);
  if (c.data_b) j["data_b"] = source_json(*c.data_b);
  return j;
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.train.seed = seed;
}

TaskStream load_stream(const RunConfig& config, const DataSource& source, std::size_t index,
                       const TaskStream* first) {
  if (source.copy_of_a) {
    if (!first) throw ConfigError("copy_of_a needs the first stream");
    return offset_copy(*first, source.copy_offset);
  }
  if (source.synthetic) {
    SyntheticSpec spec = *source.synthetic;
    if (!source.synthetic_seed_given) spec.seed = derive_seed(config.seed, {kStreamSeedTag, index});
    if (!source.synthetic_shared_seed_given) spec.shared_seed = derive_seed(config.seed, {kSharedSeedTag});
    return generate_synthetic(spec);
  }
  return read_embedding_file(*source.embeddings_train, source.embeddings_test, source.holdout_every);
}

FrozenEncoderPair make_encoders(const RunConfig& config, const TaskStream& stream) {
  EncoderConfig ec;
  ec.seed = config.seed;
  ec.max_positions = config.encoder.max_positions;
  ec.aligned_towers = config.encoder.aligned_towers;
  ec.dim = stream.token_dim;
  if (config.encoder.dim && *config.encoder.dim != ec.dim)
    throw ConfigError("encoder.dim " + std::to_string(*config.encoder.dim) + " does not match the data's token width " +
                      std::to_string(ec.dim));
  const bool synthetic = (config.data && config.data->synthetic) || (config.data_a && config.data_a->synthetic);
  if (synthetic) {
    ec.feature_width = stream.input_width;
    return FrozenEncoderPair::toy(ec);
  }
  if (stream.input_width != ec.dim)
    throw DataError("embedding width " + std::to_string(stream.input_width) + " differs from token width " +
                    std::to_string(ec.dim));
  ec.feature_width = ec.dim;
  return FrozenEncoderPair::lookup(ec);
}

std::size_t threads_from_env() {
  const char* v = std::getenv("ATTRIBANK_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw ConfigError("ATTRIBANK_THREADS must be an integer in [1, 1024]");
  return static_cast<std::size_t>(n);
}

json metrics_json(const RunConfig& config, const TrainOutcome& o, const FrozenEncoderPair& encoders) {
  json avg = json::array();
  for (std::size_t t = 1; t <= o.matrix.rows_filled(); ++t) avg.push_back(average_accuracy(o.matrix, t));
  json j{{"mode", mode_name(config.mode)},
         {"seed", config.seed},
         {"tasks_completed", o.matrix.rows_filled()},
         {"average_accuracy", avg},
         {"final_average_accuracy", o.matrix.rows_filled() ? final_average_accuracy(o.matrix) : 0.0},
         {"encoder_checksum_before", hex64(o.encoder_checksum_before)},
         {"encoder_checksum_after", hex64(o.encoder_checksum_after)}};
  if (config.mode == LearnerMode::kAttriClip)
    j["mean_prompt_abs_cosine"] = mean_prompt_abs_cosine(encoders.text(), o.state.bank);
  return j;
}

TrainOutcome execute_train(const RunConfig& config, const TrainOptions& options) {
  if (!config.data) throw ConfigError("config: 'data' is required for training");
  const std::string started = utc_now();
  const TaskStream stream = load_stream(config, *config.data, 0);
  const FrozenEncoderPair encoders = make_encoders(config, stream);
  ContinualTrainer trainer(encoders, config.train);
  trainer.set_eval_threads(options.threads);

  const bool writing = !options.out_dir.empty();
  const fs::path out(options.out_dir);
  if (writing) {
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "tasks");
  }

  TrainOutcome o;
  o.encoder_checksum_before = encoders.checksum();
  o.state = LearnerState::create(config.mode, config.train, encoders.dim());
  std::optional<AccuracyMatrix> partial;
  if (options.resume) {
    if (!writing) throw ConfigError("--resume needs --out");
    std::optional<std::size_t> latest;
    for (std::size_t t = 0; t < stream.tasks.size(); ++t)
      if (fs::exists(out / "checkpoints" / ("task_" + std::to_string(t) + ".ckpt"))) latest = t;
    if (latest) {
      Checkpoint ck = read_checkpoint((out / "checkpoints" / ("task_" + std::to_string(*latest) + ".ckpt")).string());
      if (json(ck.config) != json(config.train) || ck.encoder_seed != config.seed || ck.state.mode != config.mode)
        throw ConfigError("--resume: checkpoint was written by a different config");
      if (ck.progress.value("input_hash", "") != hex64(input_hash(config)))
        throw ConfigError("--resume: inputs changed since the checkpoint was written");
      o.state = std::move(ck.state);
      partial = accuracy_matrix_from_json(ck.progress.at("matrix"));
    }
  }

  std::size_t trained_now = 0;
  RunHooks hooks;
  hooks.after_task = [&](std::size_t t, const LearnerState& state, const AccuracyMatrix& m, const TaskReport& r) {
    if (!options.quiet)
      std::cout << stream.name << " task " << (t + 1) << "/" << stream.tasks.size()
                << ": average accuracy " << format_pct(average_accuracy(m, t + 1)) << "\n";
    if (writing) {
      write_json(out / "tasks" / ("task_" + std::to_string(t) + ".json"), to_json(r));
      Checkpoint ck{config.train, state, config.seed,
                    {{"matrix", to_json(m)}, {"input_hash", hex64(input_hash(config))}}};
      write_checkpoint((out / "checkpoints" / ("task_" + std::to_string(t) + ".ckpt")).string(), ck);
    }
    ++trained_now;
    if (options.stop_after && trained_now >= *options.stop_after && t + 1 < stream.tasks.size()) {
      o.matrix = m;
      o.state = state;
      throw StopRequested{};
    }
  };

  try {
    o.matrix = trainer.run_sequence(o.state, stream, hooks, partial ? &*partial : nullptr);
    o.completed = true;
  } catch (const StopRequested&) {
    o.completed = false;
  }
  o.encoder_checksum_after = encoders.checksum();
  if (o.encoder_checksum_after != o.encoder_checksum_before)
    throw NumericError("frozen encoder weights changed during training");

  if (writing) {
    std::vector<std::string> outputs{"manifest.json", "checkpoints/", "tasks/"};
    if (o.completed) {
      write_json(out / "accuracy_matrix.json", to_json(o.matrix));
      write_text(out / "accuracy_matrix.csv", to_csv(o.matrix, mode_name(config.mode)));
      write_json(out / "metrics.json", metrics_json(config, o, encoders));
      outputs.insert(outputs.end(), {"metrics.json", "accuracy_matrix.json", "accuracy_matrix.csv"});
    }
    write_json(out / "manifest.json", manifest("train", config, started, outputs));
  }
  return o;
}

CdclRun execute_cdcl(const RunConfig& config, const std::vector<LearnerMode>& modes, std::size_t threads) {
  if (!config.data_a || !config.data_b) throw ConfigError("config: cdcl needs 'data_a' and 'data_b'");
  const TaskStream a = load_stream(config, *config.data_a, 0);
  const TaskStream b = load_stream(config, *config.data_b, 1, &a);
  if (a.token_dim != b.token_dim || a.input_width != b.input_width)
    throw DataError("cdcl: the two streams have different widths");
  const FrozenEncoderPair encoders = make_encoders(config, a);
  CdclRun run;
  for (LearnerMode mode : modes) run.reports.push_back(run_cdcl(encoders, config.train, mode, a, b, threads).report);
  return run;
}

std::string cdcl_table_csv(const std::vector<CdclReport>& reports) {
  std::vector<std::vector<std::string>> rows{
      {"Method", "Memory", "scratch_B", "transferred_B", "FT", "scratch_A", "transferred_A", "BT", "joint"}};
  for (const auto& r : reports)
    rows.push_back({r.mode, "0", format_pct(r.acc_scratch_b), format_pct(r.acc_a2b_on_b), format_signed(r.ft),
                    format_pct(r.acc_scratch_a), format_pct(r.acc_a2b_on_a), format_signed(r.bt),
                    format_pct(r.acc_joint)});
  return to_csv_rows(rows);
}

void check_axis(const std::string& axis) {
  static const char* axes[] = {"M", "N", "C", "lambda_k", "lambda_p", "distance"};
  if (std::none_of(std::begin(axes), std::end(axes), [&](const char* a) { return axis == a; }))
    throw ConfigError("--axis must be one of M, N, C, lambda_k, lambda_p, distance (got '" + axis + "')");
}

RunConfig apply_axis(const RunConfig& config, const std::string& axis, const std::string& value) {
  check_axis(axis);
  RunConfig c = config;
  const auto as_size = [&] {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != value.size() || value[0] == '-')
      throw ConfigError("sweep: '" + value + "' is not a non-negative integer for axis " + axis);
    return static_cast<std::size_t>(v);
  };
  const auto as_real = [&] {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != value.size() || !std::isfinite(v))
      throw ConfigError("sweep: '" + value + "' is not a number for axis " + axis);
    return v;
  };
  if (axis == "M") c.train.m = as_size();
  else if (axis == "N") c.train.n = as_size();
  else if (axis == "C") c.train.c = as_size();
  else if (axis == "lambda_k") c.train.lambda_k = as_real();
  else if (axis == "lambda_p") c.train.lambda_p = as_real();
  else c.train.distance = DistanceVariant::parse(value);
  return c;
}

std::vector<FixtureRow> check_fixture_tables(const json& fx, double tolerance) {
  std::vector<FixtureRow> out;
  const auto transfer_rows = [&](const char* key, const char* delta) {
    const json& table = fx.at(key);
    for (const auto& r : table.at("rows")) {
      FixtureRow row;
      row.table = table.at("label").get<std::string>() + " " + delta;
      row.method = r.at("method").get<std::string>();
      row.printed = r.at(delta).get<double>();
      row.recomputed = r.at("transferred").get<double>() - r.at("scratch").get<double>();
      row.matches = std::abs(row.printed - row.recomputed) <= tolerance;
      row.known_discrepancy = r.value("known_discrepancy", false);
      row.note = r.value("note", "");
      out.push_back(std::move(row));
    }
  };
  transfer_rows("forward_transfer", "FT");
  transfer_rows("backward_transfer", "BT");

  // Each printed column A_t is an average accuracy. The fixture matrix has
  // row t filled with A_t, so the library mean over that row must return
  // it; every column is checked and the final one is reported.
  const json& t1 = fx.at("average_accuracy");
  std::map<std::string, double> finals;
  for (const auto& r : t1.at("rows")) {
    const auto acc = r.at("tasks").get<std::vector<double>>();
    if (acc.empty()) continue;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < acc.size(); ++i) labels.push_back("task" + std::to_string(i + 1));
    AccuracyMatrix m(labels);
    for (std::size_t i = 0; i < acc.size(); ++i) m.append_row(std::vector<double>(i + 1, acc[i]));
    bool all_columns = true;
    for (std::size_t i = 0; i < acc.size(); ++i)
      all_columns = all_columns && std::abs(average_accuracy(m, i + 1) - acc[i]) <= tolerance;
    FixtureRow row;
    row.table = t1.at("label").get<std::string>() + " Task " + std::to_string(acc.size());
    row.method = r.at("method").get<std::string>();
    row.printed = acc.back();
    row.recomputed = final_average_accuracy(m);
    row.matches = all_columns && std::abs(row.printed - row.recomputed) <= tolerance;
    finals[row.method] = acc.back();
    out.push_back(std::move(row));
  }

  // Textual claims about gaps between final columns.
  if (fx.contains("claims")) {
    const json& claims = fx.at("claims");
    // Single printed values with no per-task row, such as an upper bound.
    const json refs = claims.value("references", json::object());
    for (const auto& [name, v] : refs.items()) finals[name] = v.get<double>();
    for (const auto& r : claims.at("rows")) {
      FixtureRow row;
      row.table = claims.at("label").get<std::string>();
      const auto lhs = r.at("method").get<std::string>();
      const auto rhs = r.at("versus").get<std::string>();
      row.method = lhs + " - " + rhs;
      const auto final_of = [&](const std::string& name) {
        const auto it = finals.find(name);
        if (it == finals.end()) throw DataError("fixtures: claim refers to unknown row '" + name + "'");
        return it->second;
      };
      row.printed = r.at("printed").get<double>();
      row.recomputed = final_of(lhs) - final_of(rhs);
      row.matches = std::abs(row.printed - row.recomputed) <= tolerance;
      row.known_discrepancy = r.value("known_discrepancy", false);
      row.note = r.value("note", "");
      out.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// commands

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::optional<std::string>& mode,
              std::optional<std::uint64_t> seed, bool resume, std::optional<std::size_t> stop_after) {
  RunConfig config = load_run_config(config_path);
  if (mode) config.mode = parse_mode(*mode);
  if (seed) apply_seed(config, *seed);
  TrainOptions opt;
  opt.out_dir = out_dir;
  opt.resume = resume;
  opt.stop_after = stop_after;
  opt.threads = threads_from_env();
  const TrainOutcome o = execute_train(config, opt);
  if (o.completed)
    std::cout << "final average accuracy " << format_pct(final_average_accuracy(o.matrix)) << " ("
              << mode_name(config.mode) << ", seed " << config.seed << ")\n";
  else
    std::cout << "stopped after " << o.matrix.rows_filled() << " tasks; resume with --resume\n";
  return kOk;
}

int cmd_cdcl(const std::string& config_path, const std::string& out_dir, const std::optional<std::string>& mode,
             std::optional<std::uint64_t> seed, const std::string& format) {
  check_format(format, true);
  RunConfig config = load_run_config(config_path);
  if (seed) apply_seed(config, *seed);
  std::vector<LearnerMode> modes{LearnerMode::kZeroShot, LearnerMode::kSharedPrompt, LearnerMode::kAttriClip};
  if (mode) modes = {parse_mode(*mode)};
  const std::string started = utc_now();
  const CdclRun run = execute_cdcl(config, modes, threads_from_env());
  json reports = json::array();
  for (const auto& r : run.reports) reports.push_back(to_json(r));
  const std::string csv = cdcl_table_csv(run.reports);
  if (!out_dir.empty()) {
    const fs::path out(out_dir);
    fs::create_directories(out);
    write_json(out / "cdcl_report.json", {{"seed", config.seed}, {"reports", reports}});
    write_text(out / "cdcl_table.csv", csv);
    write_json(out / "manifest.json",
               manifest("cdcl", config, started, {"manifest.json", "cdcl_report.json", "cdcl_table.csv"}));
  }
  if (format == "json") {
    std::cout << reports.dump(2) << "\n";
  } else if (format == "csv") {
    std::cout << csv;
  } else {
    std::vector<std::vector<std::string>> rows{
        {"Method", "Memory", "scratch B", "A->B on B", "FT", "scratch A", "A->B on A", "BT", "joint"}};
    for (const auto& r : run.reports)
      rows.push_back({r.mode, "0", format_pct(r.acc_scratch_b), format_pct(r.acc_a2b_on_b), format_signed(r.ft),
                      format_pct(r.acc_scratch_a), format_pct(r.acc_a2b_on_a), format_signed(r.bt),
                      format_pct(r.acc_joint)});
    print_aligned(std::cout, rows);
  }
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t d, std::size_t k,
                  const std::string& distance, bool corrupt) {
  GradSuiteOptions o;
  o.seed = seed;
  o.n = n;
  o.m = m;
  o.d = d;
  o.k = k;
  o.c = std::min<std::size_t>(2, n);
  o.distance = DistanceVariant::parse(distance);
  if (o.distance.kind == DistanceKind::kTriplet && o.c >= o.n) o.c = o.n - 1;
  o.corrupt_gradient = corrupt;
  const auto results = run_gradient_suite(o);
  bool ok = true;
  for (const auto& g : results) {
    std::cout << std::left << std::setw(14) << g.group << " max relative error " << std::scientific
              << std::setprecision(3) << g.report.max_rel_error << std::defaultfloat << (g.passed ? "  ok" : "  FAIL")
              << "\n";
    if (!g.passed) {
      ok = false;
      std::cerr << "gradcheck: " << g.group << " coordinate " << g.report.worst_index << ": analytic "
                << g.report.analytic << " vs numeric " << g.report.numeric << "\n";
    }
  }
  return ok ? kOk : kNumericFailure;
}

int cmd_sweep(const std::string& config_path, const std::string& axis, const std::string& values,
              const std::string& out_dir, std::optional<std::uint64_t> seed, const std::string& format) {
  check_axis(axis);
  check_format(format, false);
  RunConfig base = load_run_config(config_path);
  if (seed) apply_seed(base, *seed);
  std::vector<std::string> items;
  {
    std::stringstream ss(values);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) items.push_back(item);
  }
  if (items.empty()) throw ConfigError("--values must list at least one value");

  // Parse every value up front; unparsable values abort the sweep, while
  // semantically invalid ones become error rows.
  std::vector<RunConfig> configs;
  for (const auto& v : items) configs.push_back(apply_axis(base, axis, v));

  std::vector<SweepRow> rows(items.size());
  const std::size_t workers = std::min(threads_from_env(), items.size());
  std::mutex io;
  std::size_t next = 0;
  const auto work = [&] {
    for (;;) {
      std::size_t i = 0;
      {
        std::lock_guard<std::mutex> lock(io);
        if (next == items.size()) return;
        i = next++;
      }
      rows[i].value = items[i];
      try {
        configs[i].train.validate();
        TrainOptions opt;
        if (!out_dir.empty()) opt.out_dir = (fs::path(out_dir) / (axis + "_" + items[i])).string();
        opt.quiet = true;
        const TrainOutcome o = execute_train(configs[i], opt);
        rows[i].final_average_accuracy = final_average_accuracy(o.matrix);
      } catch (const Error& e) {
        rows[i].error = e.what();
        std::lock_guard<std::mutex> lock(io);
        std::cerr << "sweep: " << axis << "=" << items[i] << ": " << e.what() << "\n";
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<std::vector<std::string>> table{{axis, "final_average_accuracy", "error"}};
  json j = json::array();
  for (const auto& r : rows) {
    table.push_back({r.value, r.final_average_accuracy ? format_pct(*r.final_average_accuracy) : "", r.error});
    json e{{"value", r.value}};
    e["final_average_accuracy"] = r.final_average_accuracy ? json(*r.final_average_accuracy) : json(nullptr);
    if (!r.error.empty()) e["error"] = r.error;
    j.push_back(e);
  }
  const json doc{{"axis", axis}, {"seed", base.seed}, {"rows", j}};
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "sweep.csv", to_csv_rows(table));
    write_json(fs::path(out_dir) / "sweep.json", doc);
  }
  if (format == "json") std::cout << doc.dump(2) << "\n";
  else std::cout << to_csv_rows(table);
  return kOk;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::optional<std::string>& fixtures,
               const std::string& format, const std::string& out_dir) {
  check_format(format, true);
  if (fixtures) {
    const json fx = read_json_file(*fixtures);
    std::vector<FixtureRow> rows;
    try {
      rows = check_fixture_tables(fx);
    } catch (const json::exception& e) {
      throw DataError(*fixtures + ": " + e.what());
    }
    std::vector<std::vector<std::string>> table{{"table", "method", "printed", "recomputed", "match"}};
    json j = json::array();
    bool all = true;
    for (const auto& r : rows) {
      all = all && (r.matches || r.known_discrepancy);
      table.push_back({r.table, r.method, format_signed(r.printed), format_signed(r.recomputed),
                       r.matches ? "yes" : (r.known_discrepancy ? "no (known)" : "NO")});
      json e{{"table", r.table}, {"method", r.method}, {"printed", r.printed},
             {"recomputed", r.recomputed}, {"matches", r.matches}, {"known_discrepancy", r.known_discrepancy}};
      if (!r.note.empty()) e["note"] = r.note;
      j.push_back(e);
    }
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "fixture_check.csv", to_csv_rows(table));
    }
    if (format == "json") std::cout << j.dump(2) << "\n";
    else if (format == "csv") std::cout << to_csv_rows(table);
    else print_aligned(std::cout, table);
    if (run_dirs.empty()) return all ? kOk : kNumericFailure;
    if (!all) return kNumericFailure;
  }

  std::size_t max_tasks = 0;
  struct Loaded {
    std::string run;
    json metrics;
    json cdcl;
  };
  std::vector<Loaded> loaded;
  for (const auto& dir : run_dirs) {
    const fs::path d(dir);
    if (!fs::exists(d / "manifest.json")) {
      std::cerr << "report: skipping " << dir << " (no manifest.json)\n";
      continue;
    }
    Loaded l{d.filename().empty() ? d.parent_path().filename().string() : d.filename().string(), nullptr, nullptr};
    if (fs::exists(d / "metrics.json")) {
      l.metrics = read_json_file(d / "metrics.json");
      max_tasks = std::max(max_tasks, l.metrics.at("average_accuracy").size());
    }
    if (fs::exists(d / "cdcl_report.json")) l.cdcl = read_json_file(d / "cdcl_report.json");
    if (l.metrics.is_null() && l.cdcl.is_null()) {
      std::cerr << "report: skipping " << dir << " (no metrics)\n";
      continue;
    }
    loaded.push_back(std::move(l));
  }
  if (!fixtures && loaded.empty()) throw DataError("report: no run directory could be loaded");

  std::vector<std::vector<std::string>> cont{{"run", "mode", "final"}};
  for (std::size_t t = 1; t <= max_tasks; ++t) cont[0].push_back("Task " + std::to_string(t));
  std::vector<std::vector<std::string>> cdcl{
      {"run", "Method", "Memory", "scratch B", "A->B on B", "FT", "scratch A", "A->B on A", "BT", "joint"}};
  json doc{{"continual", json::array()}, {"cdcl", json::array()}};
  for (const auto& l : loaded) {
    if (!l.metrics.is_null()) {
      std::vector<std::string> row{l.run, l.metrics.at("mode").get<std::string>(),
                                   format_pct(l.metrics.at("final_average_accuracy").get<double>())};
      for (const auto& v : l.metrics.at("average_accuracy")) row.push_back(format_pct(v.get<double>()));
      row.resize(cont[0].size());
      cont.push_back(row);
      json e = l.metrics;
      e["run"] = l.run;
      doc["continual"].push_back(e);
    }
    if (!l.cdcl.is_null()) {
      for (const auto& rj : l.cdcl.at("reports")) {
        const CdclReport r = cdcl_report_from_json(rj);
        cdcl.push_back({l.run, r.mode, "0", format_pct(r.acc_scratch_b), format_pct(r.acc_a2b_on_b),
                        format_signed(r.ft), format_pct(r.acc_scratch_a), format_pct(r.acc_a2b_on_a),
                        format_signed(r.bt), format_pct(r.acc_joint)});
        json e = rj;
        e["run"] = l.run;
        doc["cdcl"].push_back(e);
      }
    }
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    if (cont.size() > 1) write_text(fs::path(out_dir) / "report.csv", to_csv_rows(cont));
    if (cdcl.size() > 1) write_text(fs::path(out_dir) / "report_cdcl.csv", to_csv_rows(cdcl));
  }
  if (format == "json") {
    std::cout << doc.dump(2) << "\n";
  } else {
    const auto emit = [&](const std::vector<std::vector<std::string>>& t) {
      if (t.size() < 2) return;
      if (format == "csv") std::cout << to_csv_rows(t);
      else print_aligned(std::cout, t);
    };
    emit(cont);
    if (cont.size() > 1 && cdcl.size() > 1) std::cout << "\n";
    emit(cdcl);
  }
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"attribank: attribute-bank prompt tuning for continual learning"};
  app.require_subcommand(1);

  std::string config, out, format = "text", axis, values, distance = "cosine";
  std::optional<std::string> mode, fixtures;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stop_after;
  bool resume = false, corrupt = false;
  std::uint64_t gc_seed = 1;
  std::size_t gn = 4, gm = 3, gd = 16, gk = 3;
  std::vector<std::string> run_dirs;

  auto* train = app.add_subcommand("train", "train a learner over a task stream");
  train->add_option("--config", config, "run config (JSON)")->required();
  train->add_option("--out", out, "run directory");
  train->add_option("--mode", mode, "attriclip, shared_prompt or zero_shot");
  train->add_option("--seed", seed, "run seed");
  train->add_flag("--resume", resume, "continue from the newest checkpoint in --out");
  train->add_option("--stop-after", stop_after, "stop after this many tasks (for later --resume)");

  auto* cdcl = app.add_subcommand("cdcl", "cross-dataset protocol: scratch A, scratch B, A then B");
  cdcl->add_option("--config", config, "run config with data_a and data_b")->required();
  cdcl->add_option("--out", out, "output directory");
  cdcl->add_option("--mode", mode, "run one mode instead of all three");
  cdcl->add_option("--seed", seed, "run seed");
  cdcl->add_option("--format", format, "stdout table: text, csv or json");

  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  gradcheck->add_option("--seed", gc_seed, "seed");
  gradcheck->add_option("--n", gn, "bank size (<= 6)");
  gradcheck->add_option("--m", gm, "prompt length (<= 4)");
  gradcheck->add_option("--d", gd, "embedding width (<= 16)");
  gradcheck->add_option("--k", gk, "candidate classes (<= 4)");
  gradcheck->add_option("--distance", distance, "cosine, mse or triplet");
  gradcheck->add_flag("--corrupt-gradient", corrupt, "negative control: perturb one analytic coordinate");

  auto* sweep = app.add_subcommand("sweep", "one run per value along an ablation axis");
  sweep->add_option("--config", config, "run config")->required();
  sweep->add_option("--axis", axis, "M, N, C, lambda_k, lambda_p or distance")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--seed", seed, "run seed");
  sweep->add_option("--format", format, "csv or json");

  auto* report = app.add_subcommand("report", "merge run directories into one table");
  report->add_option("runs", run_dirs, "run directories");
  report->add_option("--paper-fixtures", fixtures, "recompute FT/BT/average accuracy of transcribed tables");
  report->add_option("--format", format, "text, csv or json");
  report->add_option("--out", out, "write CSV tables here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (*train) return cmd_train(config, out, mode, seed, resume, stop_after);
    if (*cdcl) return cmd_cdcl(config, out, mode, seed, format);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gn, gm, gd, gk, distance, corrupt);
    if (*sweep) {
      if (format == "text") format = "csv";
      return cmd_sweep(config, axis, values, out, seed, format);
    }
    if (*report) {
      if (run_dirs.empty() && !fixtures) throw ConfigError("report: give run directories or --paper-fixtures");
      return cmd_report(run_dirs, fixtures, format, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigFailure;
  }
  return kConfigFailure;
}

}  // namespace attribank::cli
