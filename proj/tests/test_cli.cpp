// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the built executable and checks exit codes and run directories.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("attribank_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ATTRIBANK_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json tiny_config() {
  return json::parse(R"({
    "seed": 4,
    "mode": "attriclip",
    "train": {"epochs_per_task": 2, "batch_size": 8, "lr0": 0.05, "c": 2, "n": 4, "m": 2},
    "data": {"synthetic": {"num_latent_attributes": 6, "attributes_per_class": 2, "num_tasks": 3,
                           "classes_per_task": 2, "samples_per_class": 8, "test_samples_per_class": 4,
                           "feature_dim": 8}}
  })");
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("configuration failures exit 1") {
  const auto dir = scratch("config");
  CHECK(run_cli("") == 1);
  CHECK(run_cli("train --config " + (dir / "missing.json").string()) == 1);
  json j = tiny_config();
  j["train"]["learning_rate"] = 0.1;
  CHECK(run_cli("train --config " + write_config(dir, j).string()) == 1);
  j = tiny_config();
  j["train"]["c"] = 9;
  CHECK(run_cli("train --config " + write_config(dir, j).string()) == 1);
  CHECK(run_cli("train --config " + write_config(dir, tiny_config()).string() + " --mode bogus") == 1);
  CHECK(run_cli("sweep --config " + write_config(dir, tiny_config()).string() + " --axis depth --values 1,2") == 1);
  CHECK(run_cli("sweep --config " + write_config(dir, tiny_config()).string() + " --axis N --values 4,x") == 1);
}

TEST_CASE("unreadable data exits 2") {
  const auto dir = scratch("data");
  json j = tiny_config();
  j["data"] = {{"embeddings", {{"train", "nowhere.atrb"}}}};
  CHECK(run_cli("train --config " + write_config(dir, j).string()) == 2);
  std::ofstream(dir / "junk.atrb") << "not an embedding file";
  j["data"] = {{"embeddings", {{"train", "junk.atrb"}}}};
  CHECK(run_cli("train --config " + write_config(dir, j).string()) == 2);
  std::ofstream(dir / "bad.json") << "{ nope";
  CHECK(run_cli("report --paper-fixtures " + (dir / "bad.json").string()) == 2);
}

TEST_CASE("gradcheck exit codes") {
  CHECK(run_cli("gradcheck") == 0);
  CHECK(run_cli("gradcheck --distance triplet --seed 3") == 0);
  CHECK(run_cli("gradcheck --corrupt-gradient") == 3);
  CHECK(run_cli("gradcheck --n 9") == 1);
}

TEST_CASE("transcribed fixture tables") {
  const std::string fixtures = std::string(ATTRIBANK_SOURCE_DIR) + "/data/published_tables.json";
  CHECK(run_cli("report --paper-fixtures " + fixtures) == 0);
  // An unflagged mismatch is a failure.
  json fx = json::parse(slurp(fixtures));
  fx["forward_transfer"]["rows"][0]["FT"] = 5.0;
  const auto dir = scratch("fixtures");
  std::ofstream(dir / "fx.json") << fx.dump();
  CHECK(run_cli("report --paper-fixtures " + (dir / "fx.json").string()) == 3);
}

TEST_CASE("train writes a complete, deterministic run directory") {
  const auto dir = scratch("train");
  const auto cfg = write_config(dir, tiny_config()).string();
  REQUIRE(run_cli("train --config " + cfg + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("train --config " + cfg + " --out " + (dir / "b").string()) == 0);
  for (const char* f : {"manifest.json", "metrics.json", "accuracy_matrix.json", "accuracy_matrix.csv",
                        "tasks/task_0.json", "checkpoints/task_2.ckpt"})
    CHECK(fs::exists(dir / "a" / f));
  const json m = json::parse(slurp(dir / "a" / "accuracy_matrix.json"));
  CHECK(m.at("accuracy").size() == 3);
  CHECK(m.at("accuracy")[2].size() == 3);
  CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
  const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest.at("seed") == 4);
  CHECK(manifest.at("input_hash") == json::parse(slurp(dir / "b" / "manifest.json")).at("input_hash"));

  // A different seed changes the result.
  REQUIRE(run_cli("train --config " + cfg + " --seed 5 --out " + (dir / "c").string()) == 0);
  CHECK(slurp(dir / "a" / "metrics.json") != slurp(dir / "c" / "metrics.json"));
}

TEST_CASE("stop and resume reproduce the straight run") {
  const auto dir = scratch("resume");
  const auto cfg = write_config(dir, tiny_config()).string();
  REQUIRE(run_cli("train --config " + cfg + " --out " + (dir / "straight").string()) == 0);
  REQUIRE(run_cli("train --config " + cfg + " --out " + (dir / "split").string() + " --stop-after 1") == 0);
  CHECK_FALSE(fs::exists(dir / "split" / "metrics.json"));
  REQUIRE(run_cli("train --config " + cfg + " --out " + (dir / "split").string() + " --resume") == 0);
  CHECK(slurp(dir / "straight" / "accuracy_matrix.json") == slurp(dir / "split" / "accuracy_matrix.json"));
  CHECK(slurp(dir / "straight" / "metrics.json") == slurp(dir / "split" / "metrics.json"));
  // Resuming under another seed is refused.
  CHECK(run_cli("train --config " + cfg + " --out " + (dir / "split").string() + " --resume --seed 99") != 0);
}

TEST_CASE("sweep records invalid values as error rows") {
  const auto dir = scratch("sweep");
  const auto cfg = write_config(dir, tiny_config()).string();
  REQUIRE(run_cli("sweep --config " + cfg + " --axis C --values 1,9 --format json --out " + (dir / "out").string()) ==
          0);
  const json doc = json::parse(slurp(dir / "out" / "sweep.json"));
  const json& rows = doc.at("rows");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("final_average_accuracy").is_number());
  CHECK_FALSE(rows[1].at("error").get<std::string>().empty());
  CHECK(fs::exists(dir / "out" / "sweep.csv"));
}

TEST_CASE("report merges run directories and skips strays") {
  const auto dir = scratch("report");
  const auto cfg = write_config(dir, tiny_config()).string();
  REQUIRE(run_cli("train --config " + cfg + " --out " + (dir / "r1").string()) == 0);
  fs::create_directories(dir / "empty");
  CHECK(run_cli("report " + (dir / "r1").string() + " " + (dir / "empty").string() + " --out " +
                (dir / "tables").string()) == 0);
  CHECK(fs::exists(dir / "tables"));
}

TEST_CASE("cdcl on an identical relabeled copy") {
  const auto dir = scratch("cdcl");
  json j = tiny_config();
  j["data_a"] = j["data"];
  j["data_b"] = {{"copy_of_a", true}};
  j.erase("data");
  const auto cfg = write_config(dir, j).string();
  REQUIRE(run_cli("cdcl --config " + cfg + " --mode zero_shot --format json --out " + (dir / "out").string()) == 0);
  const json rep = json::parse(slurp(dir / "out" / "cdcl_report.json"));
  const json& r = rep.is_array() ? rep[0] : rep.at("reports")[0];
  CHECK(r.at("ft") == 0.0);
  CHECK(r.at("bt") == 0.0);
  CHECK(fs::exists(dir / "out" / "cdcl_table.csv"));
}
