// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/learner.hpp"

#include <map>

#include "attribank/errors.hpp"
#include "attribank/rng.hpp"

namespace attribank {

std::string mode_name(LearnerMode mode) {
  switch (mode) {
    case LearnerMode::kAttriClip:
      return "attriclip";
    case LearnerMode::kSharedPrompt:
      return "shared_prompt";
    case LearnerMode::kZeroShot:
      return "zero_shot";
  }
  return "attriclip";
}

LearnerMode parse_mode(const std::string& name) {
  if (name == "attriclip") return LearnerMode::kAttriClip;
  if (name == "shared_prompt") return LearnerMode::kSharedPrompt;
  if (name == "zero_shot") return LearnerMode::kZeroShot;
  throw ConfigError("unknown mode '" + name + "' (expected attriclip, shared_prompt or zero_shot)");
}

void TrainConfig::validate() const {
  if (epochs_per_task < 1) throw ConfigError("config: epochs_per_task must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (n < 1 || m < 1) throw ConfigError("config: n and m must be >= 1");
  if (c < 1 || c > n)
    throw ConfigError("config: c=" + std::to_string(c) + " must lie in [1, n=" + std::to_string(n) + "]");
  if (!(tau > 0)) throw ConfigError("config: tau must be positive");
  if (!(lr0 >= 0)) throw ConfigError("config: lr0 must be non-negative");
  if (!(weight_decay >= 0)) throw ConfigError("config: weight_decay must be non-negative");
  if (!(lambda_k >= 0) || !(lambda_p >= 0)) throw ConfigError("config: lambda_k and lambda_p must be non-negative");
  distance.validate();
  if (distance.kind == DistanceKind::kTriplet && c >= n)
    throw ConfigError("config: triplet distance needs c < n");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs_per_task", c.epochs_per_task},
                     {"batch_size", c.batch_size},
                     {"lr0", c.lr0},
                     {"weight_decay", c.weight_decay},
                     {"lambda_k", c.lambda_k},
                     {"lambda_p", c.lambda_p},
                     {"c", c.c},
                     {"n", c.n},
                     {"m", c.m},
                     {"tau", c.tau},
                     {"distance", c.distance.name()},
                     {"triplet_margin", c.distance.triplet_margin},
                     {"seed", c.seed},
                     {"schedule", c.schedule == ScheduleScope::kPerTask ? "per_task" : "sequence"}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("config: train section must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs_per_task") c.epochs_per_task = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "lr0") c.lr0 = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "lambda_k") c.lambda_k = value.get<double>();
      else if (key == "lambda_p") c.lambda_p = value.get<double>();
      else if (key == "c") c.c = value.get<std::size_t>();
      else if (key == "n") c.n = value.get<std::size_t>();
      else if (key == "m") c.m = value.get<std::size_t>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "distance") {
        const double margin = c.distance.triplet_margin;
        c.distance = DistanceVariant::parse(value.get<std::string>());
        c.distance.triplet_margin = margin;
      } else if (key == "triplet_margin") c.distance.triplet_margin = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "schedule") {
        const auto s = value.get<std::string>();
        if (s == "per_task") c.schedule = ScheduleScope::kPerTask;
        else if (s == "sequence") c.schedule = ScheduleScope::kSequence;
        else throw ConfigError("config: schedule must be per_task or sequence");
      } else {
        throw ConfigError("config: unknown train key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

LearnerState LearnerState::create(LearnerMode mode, const TrainConfig& config, std::size_t dim) {
  config.validate();
  LearnerState s;
  s.mode = mode;
  const std::uint64_t param_seed = derive_seed(config.seed, {0x9A7A});
  if (mode == LearnerMode::kAttriClip) {
    s.bank = AttributeBank::init(config.n, config.m, dim, param_seed);
  } else if (mode == LearnerMode::kSharedPrompt) {
    s.shared_prompt = Tensor({config.m, dim}, 0.0, true);
    Rng rng(derive_seed(param_seed, {0x5AED}));
    for (double& v : s.shared_prompt.values()) v = rng.normal() * 0.02;
  }
  return s;
}

void LearnerState::register_class(ClassId c, const Tensor& token) {
  if (has_class(c)) throw DataError("class " + std::to_string(c) + " is already registered");
  class_order.push_back(c);
  class_tokens.emplace(c, token);
}

ForwardResult attriclip_forward(ad::Tape& tape, const TextEncoder& text, const TrainConfig& config, ad::Var keys,
                                ad::Var prompts, const EncodedBatch& batch,
                                std::span<const Tensor* const> class_tokens, const std::vector<Selection>* fixed) {
  if (batch.z.empty()) throw DataError("forward: empty batch");
  const std::size_t d = text.dim();
  std::vector<ad::Var> cls;
  cls.reserve(class_tokens.size());
  for (const Tensor* t : class_tokens) cls.push_back(tape.constant(*t));

  ForwardResult out;
  std::map<std::vector<std::size_t>, std::vector<ad::Var>> cache;
  std::vector<ClassificationTerm> terms;
  std::vector<ad::Var> key_terms;
  for (std::size_t j = 0; j < batch.z.size(); ++j) {
    ad::Var z = tape.constant({d}, batch.z[j]);
    Selection sel = fixed ? fixed->at(j) : select_top_c(batch.z[j], tape.value(keys), config.c);
    auto [it, inserted] = cache.try_emplace(sel.indices);
    if (inserted) {
      it->second.reserve(cls.size());
      for (ad::Var c : cls) it->second.push_back(text.encode(tape, compose_text_input(tape, sel, prompts, c)));
    }
    terms.push_back({z, it->second, batch.labels.at(j)});
    key_terms.push_back(key_matching_loss(tape, z, sel, keys, config.distance));
    out.selections.push_back(std::move(sel));
  }
  out.l_m = classification_loss(tape, terms, config.tau);
  out.l_k = tape.mean(tape.concat(key_terms));
  out.l_p = prompt_orthogonality_loss(tape, prompts, text);
  out.total = total_loss(tape, out.l_m, out.l_k, out.l_p, config.lambda_k, config.lambda_p);
  return out;
}

ForwardResult shared_prompt_forward(ad::Tape& tape, const TextEncoder& text, double tau, ad::Var prompt,
                                    const EncodedBatch& batch, std::span<const Tensor* const> class_tokens) {
  if (batch.z.empty()) throw DataError("forward: empty batch");
  const std::size_t d = text.dim();
  std::vector<ad::Var> w;
  w.reserve(class_tokens.size());
  for (const Tensor* t : class_tokens) {
    const ad::Var parts[] = {prompt, tape.constant(*t)};
    w.push_back(text.encode(tape, tape.concat(parts)));
  }
  std::vector<ClassificationTerm> terms;
  for (std::size_t j = 0; j < batch.z.size(); ++j) terms.push_back({tape.constant({d}, batch.z[j]), w, batch.labels.at(j)});
  ForwardResult out;
  out.l_m = classification_loss(tape, terms, tau);
  out.l_k = tape.constant(Tensor::scalar(0.0));
  out.l_p = tape.constant(Tensor::scalar(0.0));
  out.total = out.l_m;
  return out;
}

std::vector<std::vector<double>> candidate_text_embeddings(const TextEncoder& text, const LearnerState& state,
                                                           std::span<const ClassId> candidates,
                                                           const Selection* sel) {
  const std::size_t d = text.dim();
  std::vector<double> prefix;
  if (state.mode == LearnerMode::kAttriClip) {
    if (!sel) throw ConfigError("candidate_text_embeddings: attriclip mode needs a selection");
    for (std::size_t j : sel->indices) {
      auto p = state.bank.prompts.slice(j);
      prefix.insert(prefix.end(), p.begin(), p.end());
    }
  } else if (state.mode == LearnerMode::kSharedPrompt) {
    prefix.assign(state.shared_prompt.values().begin(), state.shared_prompt.values().end());
  }
  std::vector<std::vector<double>> out;
  out.reserve(candidates.size());
  for (ClassId c : candidates) {
    auto it = state.class_tokens.find(c);
    if (it == state.class_tokens.end()) throw DataError("unknown class id " + std::to_string(c));
    std::vector<double> tokens = prefix;
    tokens.insert(tokens.end(), it->second.values().begin(), it->second.values().end());
    const std::size_t len = tokens.size() / d;
    out.push_back(text.encode(Tensor({len, d}, std::move(tokens))));
  }
  return out;
}

}  // namespace attribank
