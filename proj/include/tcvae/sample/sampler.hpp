// Copyright 2026 The tcvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Conditional generation: y from the training class frequencies (or a fixed
// class), z ~ N(0, I), decode, one category per categorical feature, and the
// inverse preprocessing map back to original units.
//
// Row r draws everything from its own stream Rng(mix_seed(seed, r)) in the
// order y, z, categories, so a row does not depend on how the n rows are
// batched.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/core/random.hpp"
#include "tcvae/data/checkpoint.hpp"
#include "tcvae/data/dataset.hpp"
#include "tcvae/model/vae.hpp"

namespace tcvae {

struct ClassPrior {
  std::vector<double> probs;

  static ClassPrior from_labels(std::span<const std::size_t> labels, std::size_t classes) {
    if (labels.empty()) throw ContractViolation("class prior needs at least one label");
    if (classes == 0) throw ContractViolation("class prior needs at least one class");
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t y : labels) {
      if (y >= classes) throw ContractViolation("label outside the class range");
      ++counts[y];
    }
    ClassPrior p;
    for (std::size_t c : counts) {
      p.probs.push_back(static_cast<double>(c) / static_cast<double>(labels.size()));
    }
    return p;
  }

  std::size_t size() const { return probs.size(); }
};

// Smallest index whose cumulative probability exceeds u; indices with zero
// probability are never returned.
inline std::size_t categorical_draw(double u, std::span<const double> probs) {
  if (probs.empty()) throw ContractViolation("categorical draw over an empty distribution");
  double cumulative = 0.0;
  std::size_t last = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0 || !std::isfinite(probs[i])) {
      throw ContractViolation("categorical probabilities must be finite and nonnegative");
    }
    if (probs[i] == 0.0) continue;
    cumulative += probs[i];
    last = i;
    if (u < cumulative) return i;
  }
  if (last == probs.size()) throw ContractViolation("categorical probabilities sum to zero");
  return last;  // u beyond a cumulative sum that rounded below 1
}

inline std::size_t categorical_draw(Rng& rng, std::span<const double> probs) {
  return categorical_draw(rng.uniform(), probs);
}

struct SampleOptions {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> condition;  // fixed class index
  bool sample_categories = false;        // draw from the softmax instead of argmax
  std::size_t chunk = 512;               // rows decoded per forward pass
};

// Rows in the model's encoded space: numerical values in quantile-Gaussian
// units, exactly one hot entry per categorical block, and class indices.
inline EncodedTable sample_encoded(const Vae& model, const ClassPrior& prior,
                                   const SampleOptions& options) {
  const FeatureLayout& layout = model.spec().layout;
  if (options.n == 0) throw ContractViolation("sample count must be positive");
  if (options.chunk == 0) throw ContractViolation("sampling chunk must be positive");
  if (prior.size() != layout.num_classes) {
    throw ContractViolation("class prior has " + std::to_string(prior.size()) +
                            " classes, model expects " + std::to_string(layout.num_classes));
  }
  if (options.condition && *options.condition >= layout.num_classes) {
    throw ContractViolation("condition class " + std::to_string(*options.condition) +
                            " is outside the " + std::to_string(layout.num_classes) +
                            " model classes");
  }
  NoGradScope no_grad;
  const Shape latent = model.latent_shape();
  const std::size_t latent_size = latent.numel();

  EncodedTable out;
  out.rows = options.n;
  out.num_numerical = layout.num_numerical;
  out.onehot_width = layout.onehot_width();
  out.numeric.reserve(options.n * out.num_numerical);
  out.onehot.assign(options.n * out.onehot_width, 0.0);
  out.labels.resize(options.n);

  std::vector<Rng> streams;
  for (std::size_t start = 0; start < options.n; start += options.chunk) {
    const std::size_t rows = std::min(options.chunk, options.n - start);
    streams.clear();
    std::vector<double> z(rows * latent_size);
    std::vector<std::size_t> y(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      streams.emplace_back(mix_seed(options.seed, start + i));
      Rng& rng = streams.back();
      y[i] = options.condition ? *options.condition : categorical_draw(rng, prior.probs);
      for (std::size_t j = 0; j < latent_size; ++j) z[i * latent_size + j] = rng.normal();
    }
    const Reconstruction r = model.decode(Tensor(model.batch_latent_shape(rows), std::move(z)),
                                          onehot_matrix(y, layout.num_classes));
    if (r.numeric.defined()) {
      out.numeric.insert(out.numeric.end(), r.numeric.data().begin(), r.numeric.data().end());
    }
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t row = start + i;
      out.labels[row] = y[i];
      std::size_t offset = 0;
      for (std::size_t f = 0; f < r.logits.size(); ++f) {
        const std::size_t k = layout.category_sizes[f];
        const double* logits = r.logits[f].data().data() + i * k;
        std::size_t pick = 0;
        if (options.sample_categories) {
          const double top = *std::max_element(logits, logits + k);
          std::vector<double> p(k);
          double total = 0.0;
          for (std::size_t c = 0; c < k; ++c) total += p[c] = std::exp(logits[c] - top);
          for (double& v : p) v /= total;
          pick = categorical_draw(streams[i], p);
        } else {
          pick = static_cast<std::size_t>(std::max_element(logits, logits + k) - logits);
        }
        out.onehot[row * out.onehot_width + offset + pick] = 1.0;
        offset += k;
      }
    }
  }
  for (double v : out.numeric) {
    if (!std::isfinite(v)) throw NumericalError("decoder produced a non-finite value");
  }
  return out;
}

struct SyntheticTable {
  Table table;              // original units, the preprocessor's retained columns
  nlohmann::json metadata;  // {model, seed, n, condition}
};

inline SyntheticTable sample(const Vae& model, const Preprocessor& preprocessor,
                             const ClassPrior& prior, const SampleOptions& options,
                             const std::string& model_id) {
  if (FeatureLayout::from_schema(preprocessor.schema()) != model.spec().layout) {
    throw ContractViolation("model was not trained on this preprocessing schema");
  }
  SyntheticTable s;
  s.table = preprocessor.decode(sample_encoded(model, prior, options));
  s.metadata = {{"model", model_id},
                {"seed", options.seed},
                {"n", options.n},
                {"condition", nullptr},
                {"sample_categories", options.sample_categories}};
  if (options.condition) {
    s.metadata["condition"] = preprocessor.schema().target().categories.at(*options.condition);
  }
  return s;
}

// <stem>.csv and <stem>.json next to each other.
inline void write_synthetic(const std::filesystem::path& csv_path, const SyntheticTable& s) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  write_file(csv_path.string(), to_csv(s.table.to_raw()));
  std::filesystem::path meta = csv_path;
  meta.replace_extension(".json");
  write_json(meta, s.metadata);
}

}  // namespace tcvae
