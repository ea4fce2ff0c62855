// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attribank/dataset.hpp"
#include "attribank/learner.hpp"
#include "attribank/metrics.hpp"

#include <json.hpp>

namespace attribank {

// ---------------------------------------------------------------------------
// Synthetic attribute-structured streams
// ---------------------------------------------------------------------------

/// Recipe for a stream whose classes are built from shared latent
/// attributes. Each attribute has a unit direction in feature space and one
/// in token space; a class mean (and its class token) is the normalized sum
/// of its attribute subset.
struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t num_latent_attributes = 12;
  std::size_t attributes_per_class = 3;
  std::size_t num_tasks = 5;
  std::size_t classes_per_task = 4;
  std::size_t samples_per_class = 50;
  std::size_t test_samples_per_class = 20;
  std::size_t feature_dim = 32;
  std::size_t token_dim = 0;  // 0: same as feature_dim
  double noise_sigma = 0.05;
  /// Correlation rho of each token-space attribute with its feature-space
  /// direction: v = normalize(rho*u + sqrt(1-rho^2)*r). Requires
  /// token_dim == feature_dim when nonzero.
  double token_alignment = 0.0;
  std::uint64_t seed = 1;
  /// The first `shared_attributes` attributes come from `shared_seed`, so two
  /// specs with equal shared settings have those attributes in common.
  std::size_t shared_attributes = 0;
  std::uint64_t shared_seed = 0;
  ClassId class_offset = 0;
  /// Redraw a class whose attribute subset is already taken.
  bool distinct_subsets = true;

  std::size_t resolved_token_dim() const noexcept { return token_dim ? token_dim : feature_dim; }
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

/// Attribute geometry behind a generated stream, for inspection and tests.
struct SyntheticLayout {
  std::vector<std::vector<double>> feature_attributes;
  std::vector<std::vector<double>> token_attributes;
  std::vector<std::vector<std::size_t>> class_attributes;  // per class, in class-id order
  std::vector<std::vector<double>> class_means;
};

/// Deterministic per spec. Throws DataError suggesting a larger feature_dim
/// when attribute rejection sampling exceeds 10 * num_latent_attributes draws.
TaskStream generate_synthetic(const SyntheticSpec& spec, SyntheticLayout* layout = nullptr);

// ---------------------------------------------------------------------------
// Embedding file ("ATRB", little-endian)
//
//   magic[4] version:u32 d:u32 num_classes:u32 num_samples:u32
//   class_token_table: num_classes x d f32
//   records: num_samples x (label:u32 task_id:u32 embedding: d f32)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

struct EmbeddingRecord {
  std::uint32_t label = 0;
  std::uint32_t task_id = 0;
  std::vector<float> embedding;
  bool operator==(const EmbeddingRecord&) const = default;
};

struct EmbeddingFile {
  std::uint32_t version = kEmbeddingFileVersion;
  std::uint32_t d = 0;
  std::vector<std::vector<float>> class_tokens;
  std::vector<EmbeddingRecord> records;
  bool operator==(const EmbeddingFile&) const = default;
};

std::vector<std::byte> encode_embedding_file(const EmbeddingFile& file);
/// Distinct errors: BadMagicError, VersionError, TruncatedFileError (also
/// for trailing bytes), LabelRangeError.
EmbeddingFile decode_embedding_file(std::span<const std::byte> bytes);
void write_embedding_file(const std::string& path, const EmbeddingFile& file);
EmbeddingFile read_embedding_file_raw(const std::string& path);

/// Records of one split of a stream, with its full class token table. Class
/// ids must be dense in [0, num_classes).
EmbeddingFile embedding_file_from_stream(const TaskStream& stream, bool test_split);

/// Builds a stream (lookup-backend samples) from a train file and an
/// optional test file. Without a test file every `holdout_every`-th record
/// of each class is held out for testing.
TaskStream read_embedding_file(const std::string& train_path, const std::optional<std::string>& test_path,
                               std::size_t holdout_every = 5);

// ---------------------------------------------------------------------------
// Checkpoints: "ATCK" version:u32 count:u32, then length-prefixed sections
// (name_len:u32 name payload_len:u64 payload), then FNV-1a-64 of all prior
// bytes.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  LearnerState state;
  std::uint64_t encoder_seed = 0;
  /// Free-form run progress (e.g. the partial accuracy matrix).
  nlohmann::json progress = nlohmann::json::object();
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
/// Verifies the checksum before parsing anything else.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace attribank
