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

// Closed-form parameter counts of the building blocks, used to size linear
// layers against tokenizer + TCL pipelines and to cross-check ParamStore.

#pragma once

#include <cstddef>

#include "tcvae/nn/layers.hpp"

namespace tcvae::param_count {

inline std::size_t linear(std::size_t in, std::size_t out, bool bias = true) {
  return in * out + (bias ? out : 0);
}

inline std::size_t tcl(std::size_t m_in, std::size_t m_out, std::size_t d, bool bias = true) {
  return m_in * d * m_out * d + (bias ? m_out * d : 0);
}

// Feature tokenizer without the target embedding: d M' weights plus d M biases.
inline std::size_t tokenizer_features(const FeatureLayout& layout, std::size_t d,
                                      bool bias = true) {
  return d * layout.encoded_width() + (bias ? d * layout.num_features() : 0);
}

inline std::size_t target_embedding(std::size_t num_classes, std::size_t d) {
  return num_classes * d + d;
}

inline std::size_t tokenizer(const FeatureLayout& layout, std::size_t d) {
  return tokenizer_features(layout, d) + target_embedding(layout.num_classes, d);
}

// (d + 1) M': one d-vector and a bias per numerical feature, a d x |C_j|
// matrix and |C_j| biases per categorical feature.
inline std::size_t detokenizer(const FeatureLayout& layout, std::size_t d) {
  return (d + 1) * layout.encoded_width();
}

inline std::size_t attention(std::size_t d) { return 4 * linear(d, d); }

inline std::size_t transformer(std::size_t d, const TransformerConfig& c) {
  return c.layers * (4 * d + attention(d) + linear(d, c.ffn_hidden) + linear(c.ffn_hidden, d));
}

// Tokenizer followed by a TCL into H' tokens, biases excluded: d M' + M H' d^2.
inline std::size_t tokenize_then_tcl(std::size_t m, std::size_t m_prime, std::size_t h_prime,
                                     std::size_t d) {
  return d * m_prime + m * h_prime * d * d;
}

// Hidden width H at which a bias-free linear layer on the M'-wide row has as
// many parameters as tokenize_then_tcl: H = d (1 + M H' d / M').
inline double equivalent_linear_width(double m, double m_prime, double h_prime, double d) {
  return d * (1.0 + m * h_prime * d / m_prime);
}

}  // namespace tcvae::param_count
