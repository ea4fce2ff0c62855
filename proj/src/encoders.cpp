// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/encoders.hpp"

#include <cmath>
#include <string>

#include "attribank/errors.hpp"
#include "attribank/rng.hpp"

namespace attribank {

namespace {

Tensor seeded_normal(Shape shape, std::uint64_t key, double scale) {
  Tensor t(std::move(shape));
  Rng rng(key);
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h) {
  return fnv1a64(std::as_bytes(t.values()), h);
}

}  // namespace

EncoderWeights EncoderWeights::generate(const EncoderConfig& config) {
  if (config.feature_width == 0 || config.dim == 0 || config.max_positions == 0)
    throw ConfigError("encoders: feature_width, dim and max_positions must be positive");
  const double f = static_cast<double>(config.feature_width);
  const double d = static_cast<double>(config.dim);
  EncoderWeights w;
  w.config = config;
  w.token_mix = seeded_normal({config.dim, config.dim}, derive_seed(config.seed, {2}), 1.0 / std::sqrt(d));
  w.text_proj = seeded_normal({config.dim, config.dim}, derive_seed(config.seed, {3}), 1.0 / std::sqrt(d));
  if (config.aligned_towers) {
    if (config.feature_width != config.dim)
      throw ConfigError("encoders: aligned_towers requires feature_width == dim");
    w.image_proj = w.text_proj;
  } else {
    w.image_proj = seeded_normal({config.feature_width, config.dim}, derive_seed(config.seed, {1}), 1.0 / std::sqrt(f));
  }
  w.positions = seeded_normal({config.max_positions, config.dim}, derive_seed(config.seed, {4}), 1.0 / std::sqrt(d));
  return w;
}

std::uint64_t EncoderWeights::checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const Tensor* t : {&image_proj, &token_mix, &text_proj, &positions}) h = hash_tensor(*t, h);
  return h;
}

LinearImageEncoder::LinearImageEncoder(std::shared_ptr<const EncoderWeights> weights)
    : weights_(std::move(weights)) {}

std::size_t LinearImageEncoder::input_width() const { return weights_->config.feature_width; }
std::size_t LinearImageEncoder::output_dim() const { return weights_->config.dim; }

std::vector<double> LinearImageEncoder::encode(const ImageSample& sample) const {
  const std::size_t f = input_width(), d = output_dim();
  if (sample.features.size() != f)
    throw ShapeError("encode_image: sample width " + std::to_string(sample.features.size()) +
                     " does not match backend width " + std::to_string(f));
  std::vector<double> z(d, 0.0);
  const Tensor& W = weights_->image_proj;
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < d; ++j) z[j] += sample.features[i] * W[i * d + j];
  return z;
}

LookupImageEncoder::LookupImageEncoder(std::size_t dim,
                                       std::unordered_map<std::uint64_t, std::vector<double>> table)
    : dim_(dim), table_(std::move(table)) {}

std::vector<double> LookupImageEncoder::encode(const ImageSample& sample) const {
  if (sample.features.empty()) {
    auto it = table_.find(sample.id);
    if (it == table_.end()) throw DataError("encode_image: unknown sample id " + std::to_string(sample.id));
    return it->second;
  }
  if (sample.features.size() != dim_)
    throw ShapeError("encode_image: embedding width " + std::to_string(sample.features.size()) +
                     " does not match lookup dimension " + std::to_string(dim_));
  return sample.features;
}

TextEncoder::TextEncoder(std::shared_ptr<const EncoderWeights> weights) : weights_(std::move(weights)) {}

std::size_t TextEncoder::dim() const noexcept { return weights_->config.dim; }
std::size_t TextEncoder::max_length() const noexcept { return weights_->config.max_positions; }

ad::Var TextEncoder::encode(ad::Tape& tape, ad::Var tokens) const {
  const Tensor& x = tape.value(tokens);
  const std::size_t d = dim();
  if (x.rank() != 2 || x.dim(1) != d)
    throw ShapeError("encode_text: tokens must be (L," + std::to_string(d) + "), got " + shape_str(x.shape()));
  const std::size_t len = x.dim(0);
  if (len > max_length())
    throw ShapeError("encode_text: sequence length " + std::to_string(len) + " exceeds positional table " +
                     std::to_string(max_length()));
  const EncoderWeights& w = *weights_;
  ad::Var pos = tape.constant({len, d}, w.positions.values().subspan(0, len * d));
  ad::Var h = tape.add(tokens, pos);
  ad::Var q = tape.matmul(h, tape.constant(w.token_mix));
  ad::Var scores = tape.scale(tape.matmul(q, tape.transpose(h)), 1.0 / std::sqrt(static_cast<double>(d)));
  ad::Var mixed = tape.matmul(tape.softmax_logits(scores), h);
  ad::Var pooled = tape.reshape(tape.mean_rows(mixed), {1, d});
  return tape.reshape(tape.matmul(pooled, tape.constant(w.text_proj)), {d});
}

std::vector<double> TextEncoder::encode(const Tensor& tokens) const {
  if (tokens.numel() == 0) throw ShapeError("encode_text: empty sequence");
  ad::Tape tape;
  const Tensor& out = tape.value(encode(tape, tape.constant(tokens)));
  return {out.values().begin(), out.values().end()};
}

FrozenEncoderPair::FrozenEncoderPair(std::shared_ptr<const EncoderWeights> weights,
                                     std::shared_ptr<const ImageEncoder> image)
    : weights_(std::move(weights)), image_(std::move(image)), text_(weights_) {
  if (image_->output_dim() != weights_->config.dim)
    throw ConfigError("encoders: image embedding dimension differs from text dimension");
}

FrozenEncoderPair FrozenEncoderPair::toy(const EncoderConfig& config) {
  auto w = std::make_shared<const EncoderWeights>(EncoderWeights::generate(config));
  auto img = std::make_shared<const LinearImageEncoder>(w);
  return FrozenEncoderPair(w, img);
}

FrozenEncoderPair FrozenEncoderPair::lookup(const EncoderConfig& config,
                                            std::unordered_map<std::uint64_t, std::vector<double>> table) {
  auto w = std::make_shared<const EncoderWeights>(EncoderWeights::generate(config));
  auto img = std::make_shared<const LookupImageEncoder>(config.dim, std::move(table));
  return FrozenEncoderPair(w, img);
}

}  // namespace attribank
