// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include "attribank/data_io.hpp"
#include "attribank/errors.hpp"
#include "attribank/rng.hpp"

namespace attribank {

void SyntheticSpec::validate() const {
  if (num_latent_attributes == 0 || attributes_per_class == 0)
    throw ConfigError("synthetic: attribute counts must be positive");
  if (attributes_per_class > num_latent_attributes)
    throw ConfigError("synthetic: attributes_per_class exceeds num_latent_attributes");
  if (shared_attributes > num_latent_attributes)
    throw ConfigError("synthetic: shared_attributes exceeds num_latent_attributes");
  if (num_tasks == 0 || classes_per_task == 0 || samples_per_class == 0)
    throw ConfigError("synthetic: task, class and sample counts must be positive");
  if (feature_dim == 0) throw ConfigError("synthetic: feature_dim must be positive");
  if (!(noise_sigma >= 0)) throw ConfigError("synthetic: noise_sigma must be non-negative");
  if (!(token_alignment >= 0 && token_alignment <= 1)) throw ConfigError("synthetic: token_alignment must lie in [0, 1]");
  if (token_alignment > 0 && resolved_token_dim() != feature_dim)
    throw ConfigError("synthetic: token_alignment needs token_dim == feature_dim");
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"num_latent_attributes", s.num_latent_attributes},
                     {"attributes_per_class", s.attributes_per_class},
                     {"num_tasks", s.num_tasks},
                     {"classes_per_task", s.classes_per_task},
                     {"samples_per_class", s.samples_per_class},
                     {"test_samples_per_class", s.test_samples_per_class},
                     {"feature_dim", s.feature_dim},
                     {"token_dim", s.token_dim},
                     {"noise_sigma", s.noise_sigma},
                     {"token_alignment", s.token_alignment},
                     {"seed", s.seed},
                     {"shared_attributes", s.shared_attributes},
                     {"shared_seed", s.shared_seed},
                     {"class_offset", s.class_offset},
                     {"distinct_subsets", s.distinct_subsets}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  if (!j.is_object()) throw ConfigError("synthetic: spec must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "name") s.name = v.get<std::string>();
      else if (key == "num_latent_attributes") s.num_latent_attributes = v.get<std::size_t>();
      else if (key == "attributes_per_class") s.attributes_per_class = v.get<std::size_t>();
      else if (key == "num_tasks") s.num_tasks = v.get<std::size_t>();
      else if (key == "classes_per_task") s.classes_per_task = v.get<std::size_t>();
      else if (key == "samples_per_class") s.samples_per_class = v.get<std::size_t>();
      else if (key == "test_samples_per_class") s.test_samples_per_class = v.get<std::size_t>();
      else if (key == "feature_dim") s.feature_dim = v.get<std::size_t>();
      else if (key == "token_dim") s.token_dim = v.get<std::size_t>();
      else if (key == "noise_sigma") s.noise_sigma = v.get<double>();
      else if (key == "token_alignment") s.token_alignment = v.get<double>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "shared_attributes") s.shared_attributes = v.get<std::size_t>();
      else if (key == "shared_seed") s.shared_seed = v.get<std::uint64_t>();
      else if (key == "class_offset") s.class_offset = v.get<ClassId>();
      else if (key == "distinct_subsets") s.distinct_subsets = v.get<bool>();
      else throw ConfigError("synthetic: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic: ") + e.what());
  }
}

namespace {

std::vector<double> unit_normal(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Appends directions to `out` until it holds `target` vectors with pairwise
/// cosine below 0.5, drawing from `rng`. `budget` counts draws across calls.
void draw_attributes(Rng& rng, std::size_t dim, std::size_t target, std::vector<std::vector<double>>& out,
                     std::size_t& budget, std::size_t num_latent, const char* space) {
  while (out.size() < target) {
    if (budget == 0)
      throw DataError(std::string("synthetic: could not draw ") + std::to_string(num_latent) + " " + space +
                      " attribute directions with pairwise cosine < 0.5 within " + std::to_string(10 * num_latent) +
                      " draws; increase feature_dim");
    --budget;
    auto v = unit_normal(rng, dim);
    if (std::all_of(out.begin(), out.end(), [&](const auto& u) { return dot(u, v) < 0.5; })) out.push_back(std::move(v));
  }
}

std::vector<std::vector<double>> attribute_set(const SyntheticSpec& spec, std::size_t dim, std::uint64_t tag,
                                               const char* space) {
  std::vector<std::vector<double>> out;
  std::size_t budget = 10 * spec.num_latent_attributes;
  Rng shared(derive_seed(spec.shared_seed, {0xA77, tag}));
  draw_attributes(shared, dim, spec.shared_attributes, out, budget, spec.num_latent_attributes, space);
  Rng own(derive_seed(spec.seed, {0xA77, tag}));
  draw_attributes(own, dim, spec.num_latent_attributes, out, budget, spec.num_latent_attributes, space);
  return out;
}

std::vector<double> normalized_sum(const std::vector<std::vector<double>>& vs, const std::vector<std::size_t>& idx) {
  std::vector<double> s(vs.front().size(), 0.0);
  for (std::size_t a : idx)
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += vs[a][i];
  const double n = std::sqrt(dot(s, s));
  if (n > 0)
    for (double& x : s) x /= n;
  return s;
}

}  // namespace

TaskStream generate_synthetic(const SyntheticSpec& spec, SyntheticLayout* layout) {
  spec.validate();
  const std::size_t token_dim = spec.resolved_token_dim();
  SyntheticLayout lay;
  lay.feature_attributes = attribute_set(spec, spec.feature_dim, 1, "feature");
  lay.token_attributes = attribute_set(spec, token_dim, 2, "token");
  if (spec.token_alignment > 0) {
    const double rho = spec.token_alignment;
    const double rest = std::sqrt(1.0 - rho * rho);
    for (std::size_t a = 0; a < spec.num_latent_attributes; ++a) {
      auto& v = lay.token_attributes[a];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho * lay.feature_attributes[a][i] + rest * v[i];
      const double n = std::sqrt(dot(v, v));
      for (double& x : v) x /= n;
    }
  }

  const std::size_t num_classes = spec.num_tasks * spec.classes_per_task;
  Rng subset_rng(derive_seed(spec.seed, {0xC1A5}));
  std::set<std::vector<std::size_t>> used;
  std::vector<std::size_t> pool(spec.num_latent_attributes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> subset;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > 1000)
        throw ConfigError("synthetic: cannot find distinct attribute subsets for " + std::to_string(num_classes) +
                          " classes; disable distinct_subsets or add attributes");
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      // Partial Fisher-Yates: the first k slots are a uniform k-subset.
      for (std::size_t i = 0; i < spec.attributes_per_class; ++i) {
        const std::size_t j = i + subset_rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
      }
      subset.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.attributes_per_class));
      std::sort(subset.begin(), subset.end());
      if (!spec.distinct_subsets || used.insert(subset).second) break;
    }
    lay.class_attributes.push_back(subset);
    lay.class_means.push_back(normalized_sum(lay.feature_attributes, subset));
  }

  TaskStream stream;
  stream.name = spec.name;
  stream.input_width = spec.feature_dim;
  stream.token_dim = token_dim;
  Rng noise(derive_seed(spec.seed, {0x5A3F}));
  std::uint64_t sample_id = 0;
  auto draw = [&](std::size_t c, std::uint32_t task) {
    ImageSample s;
    s.id = sample_id++;
    s.label = spec.class_offset + static_cast<ClassId>(c);
    s.task_id = task;
    s.features = lay.class_means[c];
    if (spec.noise_sigma > 0)
      for (double& x : s.features) x += spec.noise_sigma * noise.normal();
    return s;
  };
  for (std::size_t t = 0; t < spec.num_tasks; ++t) {
    Task task;
    task.id = static_cast<std::uint32_t>(t);
    for (std::size_t k = 0; k < spec.classes_per_task; ++k) {
      const std::size_t c = t * spec.classes_per_task + k;
      task.classes.push_back(spec.class_offset + static_cast<ClassId>(c));
      task.class_tokens.emplace_back(Shape{1, token_dim}, normalized_sum(lay.token_attributes, lay.class_attributes[c]));
    }
    for (std::size_t k = 0; k < spec.classes_per_task; ++k)
      for (std::size_t i = 0; i < spec.samples_per_class; ++i)
        task.train.push_back(draw(t * spec.classes_per_task + k, task.id));
    for (std::size_t k = 0; k < spec.classes_per_task; ++k)
      for (std::size_t i = 0; i < spec.test_samples_per_class; ++i)
        task.test.push_back(draw(t * spec.classes_per_task + k, task.id));
    stream.tasks.push_back(std::move(task));
  }
  if (layout) *layout = std::move(lay);
  return stream;
}

}  // namespace attribank
