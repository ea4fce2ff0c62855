// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/data_io.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "attribank/errors.hpp"
#include "attribank/rng.hpp"
#include "byte_io.hpp"

namespace attribank {

using detail::ByteReader;
using detail::ByteWriter;

// --- embedding file --------------------------------------------------------

std::vector<std::byte> encode_embedding_file(const EmbeddingFile& file) {
  ByteWriter w;
  w.raw("ATRB");
  w.u32(file.version);
  w.u32(file.d);
  w.u32(static_cast<std::uint32_t>(file.class_tokens.size()));
  w.u32(static_cast<std::uint32_t>(file.records.size()));
  for (const auto& row : file.class_tokens) {
    if (row.size() != file.d) throw DataError("embedding file: class token row width differs from d");
    for (float v : row) w.f32(v);
  }
  for (const auto& r : file.records) {
    if (r.embedding.size() != file.d) throw DataError("embedding file: record width differs from d");
    if (r.label >= file.class_tokens.size()) throw LabelRangeError("embedding file: record label out of range");
    w.u32(r.label);
    w.u32(r.task_id);
    for (float v : r.embedding) w.f32(v);
  }
  return std::move(w.bytes());
}

EmbeddingFile decode_embedding_file(std::span<const std::byte> bytes) {
  ByteReader r(bytes, "embedding file");
  const std::string magic = r.str(4);
  if (magic != "ATRB") throw BadMagicError("embedding file: bad magic '" + magic + "' (expected ATRB)");
  EmbeddingFile f;
  f.version = r.u32();
  if (f.version != kEmbeddingFileVersion)
    throw VersionError("embedding file: unsupported version " + std::to_string(f.version));
  f.d = r.u32();
  const std::uint32_t num_classes = r.u32();
  const std::uint32_t num_samples = r.u32();
  const std::uint64_t expected =
      20 + std::uint64_t{4} * f.d * num_classes + std::uint64_t{num_samples} * (8 + std::uint64_t{4} * f.d);
  if (bytes.size() < expected)
    throw TruncatedFileError("embedding file: " + std::to_string(bytes.size()) + " bytes, header implies " +
                             std::to_string(expected));
  if (bytes.size() > expected)
    throw TruncatedFileError("embedding file: " + std::to_string(bytes.size() - expected) +
                             " trailing bytes beyond the header-implied length");
  f.class_tokens.assign(num_classes, std::vector<float>(f.d));
  for (auto& row : f.class_tokens)
    for (float& v : row) v = r.f32();
  f.records.resize(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) {
    auto& rec = f.records[i];
    rec.label = r.u32();
    rec.task_id = r.u32();
    if (rec.label >= num_classes)
      throw LabelRangeError("embedding file: record " + std::to_string(i) + " label " + std::to_string(rec.label) +
                            " >= num_classes " + std::to_string(num_classes));
    rec.embedding.resize(f.d);
    for (float& v : rec.embedding) v = r.f32();
  }
  return f;
}

void write_embedding_file(const std::string& path, const EmbeddingFile& file) {
  detail::write_file_atomic(path, encode_embedding_file(file));
}

EmbeddingFile read_embedding_file_raw(const std::string& path) {
  return decode_embedding_file(detail::read_file_bytes(path));
}

EmbeddingFile embedding_file_from_stream(const TaskStream& stream, bool test_split) {
  EmbeddingFile f;
  f.d = static_cast<std::uint32_t>(stream.token_dim);
  if (stream.input_width != stream.token_dim)
    throw DataError("embedding file: sample width must equal token dimension");
  std::map<ClassId, const Tensor*> tokens;
  for (const Task& t : stream.tasks)
    for (std::size_t i = 0; i < t.classes.size(); ++i) tokens[t.classes[i]] = &t.class_tokens[i];
  ClassId expect = 0;
  for (const auto& [id, tok] : tokens) {
    if (id != expect++) throw DataError("embedding file: class ids must be dense from 0");
    std::vector<float> row;
    for (double v : tok->values()) row.push_back(static_cast<float>(v));
    f.class_tokens.push_back(std::move(row));
  }
  for (const Task& t : stream.tasks)
    for (const ImageSample& s : test_split ? t.test : t.train) {
      EmbeddingRecord rec{s.label, t.id, {}};
      for (double v : s.features) rec.embedding.push_back(static_cast<float>(v));
      f.records.push_back(std::move(rec));
    }
  return f;
}

TaskStream read_embedding_file(const std::string& train_path, const std::optional<std::string>& test_path,
                               std::size_t holdout_every) {
  const EmbeddingFile train = read_embedding_file_raw(train_path);
  std::optional<EmbeddingFile> test;
  if (test_path) {
    test = read_embedding_file_raw(*test_path);
    if (test->d != train.d || test->class_tokens != train.class_tokens)
      throw DataError("embedding file: test file header or class table differs from train file");
  } else if (holdout_every < 2) {
    throw ConfigError("embedding file: holdout_every must be >= 2 without a test file");
  }

  TaskStream stream;
  stream.name = train_path;
  stream.input_width = train.d;
  stream.token_dim = train.d;
  std::map<std::uint32_t, Task> tasks;
  auto widen = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  auto task_for = [&](std::uint32_t id) -> Task& {
    Task& t = tasks[id];
    t.id = id;
    return t;
  };
  auto note_class = [&](Task& t, ClassId c) {
    if (std::find(t.classes.begin(), t.classes.end(), c) == t.classes.end()) {
      t.classes.push_back(c);
      t.class_tokens.emplace_back(Shape{1, train.d}, widen(train.class_tokens[c]));
    }
  };
  std::map<ClassId, std::size_t> seen_per_class;
  std::uint64_t id = 0;
  for (const auto& rec : train.records) {
    Task& t = task_for(rec.task_id);
    note_class(t, rec.label);
    ImageSample s{id++, widen(rec.embedding), rec.label, rec.task_id};
    const std::size_t k = seen_per_class[rec.label]++;
    if (!test && k % holdout_every == holdout_every - 1) t.test.push_back(std::move(s));
    else t.train.push_back(std::move(s));
  }
  if (test)
    for (const auto& rec : test->records) {
      Task& t = task_for(rec.task_id);
      note_class(t, rec.label);
      t.test.push_back({id++, widen(rec.embedding), rec.label, rec.task_id});
    }
  for (auto& [tid, t] : tasks) {
    // Keep class order canonical regardless of record order.
    std::vector<std::size_t> order(t.classes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t.classes[a] < t.classes[b]; });
    Task sorted = t;
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted.classes[i] = t.classes[order[i]];
      sorted.class_tokens[i] = t.class_tokens[order[i]];
    }
    stream.tasks.push_back(std::move(sorted));
  }
  stream.validate();
  return stream;
}

// --- checkpoints -----------------------------------------------------------

namespace {

void put_tensor(ByteWriter& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.u64(e);
  for (double v : t.values()) w.f64(v);
}

Tensor get_tensor(ByteReader& r, bool requires_grad) {
  const std::uint32_t rank = r.u32();
  if (rank == 0) return Tensor();
  if (rank > 8) throw DataError("checkpoint: implausible tensor rank");
  Shape shape(rank);
  for (auto& e : shape) e = r.u64();
  const std::size_t n = shape_numel(shape);
  if (n > r.remaining() / 8) throw TruncatedFileError("checkpoint: tensor larger than section");
  std::vector<double> vals(n);
  for (double& v : vals) v = r.f64();
  return Tensor(std::move(shape), std::move(vals), requires_grad);
}

void put_section(ByteWriter& w, const std::string& name, const std::vector<std::byte>& payload) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u64(payload.size());
  w.raw(payload);
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, std::vector<std::byte>> sections;
  {
    nlohmann::json cfg = ckpt.config;
    const std::string s = cfg.dump();
    ByteWriter w;
    w.raw(s);
    sections["config"] = std::move(w.bytes());
  }
  {
    nlohmann::json meta = {{"mode", mode_name(ckpt.state.mode)},
                           {"step_counter", ckpt.state.step_counter},
                           {"tasks_completed", ckpt.state.tasks_completed},
                           {"encoder_seed", ckpt.encoder_seed},
                           {"class_order", ckpt.state.class_order},
                           {"progress", ckpt.progress}};
    ByteWriter w;
    w.raw(meta.dump());
    sections["meta"] = std::move(w.bytes());
  }
  {
    ByteWriter w;
    put_tensor(w, ckpt.state.bank.keys);
    put_tensor(w, ckpt.state.bank.prompts);
    put_tensor(w, ckpt.state.shared_prompt);
    sections["params"] = std::move(w.bytes());
  }
  {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(ckpt.state.class_order.size()));
    for (ClassId c : ckpt.state.class_order) {
      w.u32(c);
      put_tensor(w, ckpt.state.class_tokens.at(c));
    }
    sections["class_tokens"] = std::move(w.bytes());
  }
  ByteWriter out;
  out.raw("ATCK");
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) put_section(out, name, payload);
  out.u64(fnv1a64(out.bytes()));
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < 20) throw TruncatedFileError("checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.last(8), "checkpoint");
  if (fnv1a64(body) != tail.u64()) throw ChecksumError("checkpoint: checksum mismatch (file corrupted)");

  ByteReader r(body, "checkpoint");
  const std::string magic = r.str(4);
  if (magic != "ATCK") throw BadMagicError("checkpoint: bad magic '" + magic + "'");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw VersionError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::map<std::string, std::span<const std::byte>> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint64_t len = r.u64();
    sections[name] = r.take(static_cast<std::size_t>(len));
  }
  for (const char* required : {"config", "meta", "params", "class_tokens"})
    if (!sections.count(required)) throw DataError(std::string("checkpoint: missing section '") + required + "'");

  auto as_json = [](std::span<const std::byte> s) {
    return nlohmann::json::parse(std::string(reinterpret_cast<const char*>(s.data()), s.size()));
  };
  Checkpoint ck;
  try {
    ck.config = as_json(sections["config"]).get<TrainConfig>();
    const auto meta = as_json(sections["meta"]);
    ck.state.mode = parse_mode(meta.at("mode").get<std::string>());
    ck.state.step_counter = meta.at("step_counter").get<std::uint64_t>();
    ck.state.tasks_completed = meta.at("tasks_completed").get<std::size_t>();
    ck.encoder_seed = meta.at("encoder_seed").get<std::uint64_t>();
    ck.progress = meta.at("progress");
    const auto order = meta.at("class_order").get<std::vector<ClassId>>();

    ByteReader pr(sections["params"], "checkpoint params");
    ck.state.bank.keys = get_tensor(pr, true);
    ck.state.bank.prompts = get_tensor(pr, true);
    ck.state.shared_prompt = get_tensor(pr, true);

    ByteReader cr(sections["class_tokens"], "checkpoint class tokens");
    const std::uint32_t nc = cr.u32();
    for (std::uint32_t i = 0; i < nc; ++i) {
      const ClassId c = cr.u32();
      ck.state.register_class(c, get_tensor(cr, false));
    }
    if (ck.state.class_order != order) throw DataError("checkpoint: class order mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file_bytes(path)); }

}  // namespace attribank
