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

// Per-token cosine similarity between two models' representations of the
// same rows, averaged over rows.

#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/data/dataset.hpp"
#include "tcvae/model/vae.hpp"

namespace tcvae {

enum class Representation {
  kOutput,  // decoder output tokens fed to the detokenizer, decoded from Z = μ
  kLatent,  // posterior means
};

inline Representation parse_representation(const std::string& s) {
  if (s == "output") return Representation::kOutput;
  if (s == "latent") return Representation::kLatent;
  throw ContractViolation("representation must be 'output' or 'latent'");
}

// cos(a, b); 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors of different lengths");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

// Mean over rows of cos(a[r, s, :], b[r, s, :]) for each token s of two
// [rows, tokens, d] tensors.
inline std::vector<double> token_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw DimensionError("token similarity needs two equal [B x S x d] tensors, got " +
                         a.shape().str() + " and " + b.shape().str());
  }
  const std::size_t rows = a.shape()[0], tokens = a.shape()[1], d = a.shape()[2];
  std::vector<double> out(tokens, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < tokens; ++s) {
      const std::size_t off = (r * tokens + s) * d;
      out[s] += cosine(a.data().subspan(off, d), b.data().subspan(off, d));
    }
  }
  for (double& v : out) v /= static_cast<double>(rows);
  return out;
}

inline Tensor representation(const Vae& model, const Batch& b, Representation which) {
  const Tensor mu = model.encode(b).mu;
  if (which == Representation::kLatent) return mu;
  return model.decode_tokens(mu, b.y_onehot);
}

// Per-token similarity of the two models' chosen representation over all
// rows of `data`.
inline std::vector<double> embedding_similarity(const Vae& a, const Vae& b,
                                                const EncodedTable& data, Representation which,
                                                std::size_t chunk = 512) {
  if (a.spec().layout != b.spec().layout) {
    throw ContractViolation("models were built for different feature layouts");
  }
  if (a.spec().variant == Variant::kBase || b.spec().variant == Variant::kBase) {
    throw ContractViolation("the Base variant has no token representation");
  }
  if (data.rows == 0) throw DataError("no rows to embed");
  NoGradScope no_grad;
  std::vector<double> total;
  for (std::size_t start = 0; start < data.rows; start += chunk) {
    const std::size_t end = std::min(data.rows, start + chunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(data, idx, a.spec().layout);
    const Tensor ra = representation(a, batch, which);
    const Tensor rb = representation(b, batch, which);
    if (ra.shape() != rb.shape()) {
      throw DimensionError("incompatible token counts: " + ra.shape().str() + " vs " +
                           rb.shape().str());
    }
    const std::vector<double> part = token_similarity(ra, rb);
    if (total.empty()) total.assign(part.size(), 0.0);
    for (std::size_t s = 0; s < part.size(); ++s) {
      total[s] += part[s] * static_cast<double>(idx.size());
    }
  }
  for (double& v : total) v /= static_cast<double>(data.rows);
  return total;
}

}  // namespace tcvae
