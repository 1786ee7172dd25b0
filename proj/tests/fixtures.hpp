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

// Model-level fixtures shared by the unit and acceptance suites.

#pragma once

#include <utility>
#include <vector>

#include "tcvae/model/vae.hpp"
#include "test_util.hpp"

namespace tcvae::testing {

// 3 numerical + 2 categorical features (3 and 4 categories), 3 classes.
inline FeatureLayout small_layout() { return FeatureLayout{3, {3, 4}, 3}; }

inline EncodedTable random_encoded(const FeatureLayout& layout, std::size_t rows, Rng& rng) {
  EncodedTable e;
  e.rows = rows;
  e.num_numerical = layout.num_numerical;
  e.onehot_width = layout.onehot_width();
  e.onehot.assign(rows * e.onehot_width, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < layout.num_numerical; ++i) e.numeric.push_back(rng.normal());
    std::size_t offset = 0;
    for (std::size_t c : layout.category_sizes) {
      e.onehot[r * e.onehot_width + offset + rng.below(c)] = 1.0;
      offset += c;
    }
    e.labels.push_back(rng.below(layout.num_classes));
  }
  return e;
}

inline Batch random_batch(const FeatureLayout& layout, std::size_t rows, Rng& rng) {
  const EncodedTable e = random_encoded(layout, rows, rng);
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  return make_batch(e, idx, layout);
}

// `count` distinct (parameter, entry) pairs drawn uniformly over all scalars.
inline std::vector<std::pair<std::size_t, std::size_t>> sample_entries(const ParamStore& store,
                                                                      std::size_t count,
                                                                      Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  const auto& entries = store.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    for (std::size_t i = 0; i < entries[p].second.numel(); ++i) all.emplace_back(p, i);
  }
  rng.shuffle(all);
  all.resize(std::min(count, all.size()));
  return all;
}

// Finite-difference check of the full negative ELBO (fixed ε) on `count`
// random parameters.
inline GradCheckResult check_model_gradients(Vae& model, const Batch& batch, std::size_t count,
                                             double h, std::uint64_t seed) {
  Rng pick(seed);
  auto entries = sample_entries(model.params(), count, pick);
  auto loss_fn = [&] {
    Rng eps(seed + 1);
    return model.elbo(batch, &eps).loss;
  };
  return check_gradients(loss_fn, model.params().tensors(), h, entries);
}

}  // namespace tcvae::testing
