// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "attribank/autodiff.hpp"
#include "attribank/tensor.hpp"

namespace attribank {

using ClassId = std::uint32_t;

/// One labeled image, entering as a feature vector (toy backend) or as a
/// precomputed embedding (lookup backend).
struct ImageSample {
  std::uint64_t id = 0;
  std::vector<double> features;
  ClassId label = 0;
  std::uint32_t task_id = 0;
};

struct EncoderConfig {
  std::uint64_t seed = 0;
  std::size_t feature_width = 32;
  std::size_t dim = 32;
  std::size_t max_positions = 256;
  /// Image projection reuses the text projection (requires
  /// feature_width == dim), standing in for contrastive pretraining.
  bool aligned_towers = false;
};

/// Frozen parameters of both towers. Never handed to a tape as parameters.
struct EncoderWeights {
  EncoderConfig config;
  Tensor image_proj;  // (feature_width, dim)
  Tensor token_mix;   // (dim, dim)
  Tensor text_proj;   // (dim, dim)
  Tensor positions;   // (max_positions, dim)

  /// Entries ~ N(0,1)/sqrt(fan_in), drawn from independent seeded streams.
  static EncoderWeights generate(const EncoderConfig& config);

  /// FNV-1a over the raw bytes of every parameter, in declaration order.
  std::uint64_t checksum() const;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  /// Width of ImageSample::features this backend accepts.
  virtual std::size_t input_width() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::vector<double> encode(const ImageSample& sample) const = 0;
};

/// z = x^T W with the seeded frozen projection W.
class LinearImageEncoder final : public ImageEncoder {
 public:
  explicit LinearImageEncoder(std::shared_ptr<const EncoderWeights> weights);
  std::size_t input_width() const override;
  std::size_t output_dim() const override;
  std::vector<double> encode(const ImageSample& sample) const override;

 private:
  std::shared_ptr<const EncoderWeights> weights_;
};

/// Precomputed embeddings. A sample that carries a vector is returned
/// verbatim; an empty one is resolved by id in the table.
class LookupImageEncoder final : public ImageEncoder {
 public:
  explicit LookupImageEncoder(std::size_t dim,
                              std::unordered_map<std::uint64_t, std::vector<double>> table = {});
  std::size_t input_width() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> encode(const ImageSample& sample) const override;

 private:
  std::size_t dim_;
  std::unordered_map<std::uint64_t, std::vector<double>> table_;
};

/// Toy text tower: tokens + positions -> one softmax token-mixing step ->
/// mean pool -> linear projection. Differentiable in the input tokens only.
class TextEncoder {
 public:
  explicit TextEncoder(std::shared_ptr<const EncoderWeights> weights);

  std::size_t dim() const noexcept;
  std::size_t max_length() const noexcept;

  /// tokens: (L, dim) on the tape. Returns a {dim} embedding.
  ad::Var encode(ad::Tape& tape, ad::Var tokens) const;
  /// Gradient-free convenience path.
  std::vector<double> encode(const Tensor& tokens) const;

 private:
  std::shared_ptr<const EncoderWeights> weights_;
};

/// The frozen dual encoder. Copies share the same immutable weights.
class FrozenEncoderPair {
 public:
  FrozenEncoderPair(std::shared_ptr<const EncoderWeights> weights, std::shared_ptr<const ImageEncoder> image);

  static FrozenEncoderPair toy(const EncoderConfig& config);
  static FrozenEncoderPair lookup(const EncoderConfig& config,
                                  std::unordered_map<std::uint64_t, std::vector<double>> table = {});

  const ImageEncoder& image() const noexcept { return *image_; }
  const TextEncoder& text() const noexcept { return text_; }
  const EncoderWeights& weights() const noexcept { return *weights_; }
  std::size_t dim() const noexcept { return text_.dim(); }
  std::uint64_t checksum() const { return weights_->checksum(); }

 private:
  std::shared_ptr<const EncoderWeights> weights_;
  std::shared_ptr<const ImageEncoder> image_;
  TextEncoder text_;
};

}  // namespace attribank
