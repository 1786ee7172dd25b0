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

// Differentiable building blocks. Every forward takes a leading batch axis:
// token tensors are [B, tokens, d].

#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/ops.hpp"
#include "tcvae/data/schema.hpp"
#include "tcvae/nn/params.hpp"

namespace tcvae {

// Column counts the tokenizer and detokenizer are built for.
struct FeatureLayout {
  std::size_t num_numerical = 0;
  std::vector<std::size_t> category_sizes;
  std::size_t num_classes = 0;

  static FeatureLayout from_schema(const FeatureSchema& s) {
    return {s.num_numerical(), s.category_sizes(), s.num_classes()};
  }

  std::size_t num_categorical() const { return category_sizes.size(); }
  std::size_t num_features() const { return num_numerical + num_categorical(); }
  std::size_t onehot_width() const {
    return std::accumulate(category_sizes.begin(), category_sizes.end(), std::size_t{0});
  }
  std::size_t encoded_width() const { return num_numerical + onehot_width(); }

  bool operator==(const FeatureLayout&) const = default;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : w_(store.create(name + ".W", {in, out}, Init::kUniformFanIn, rng, in)),
        b_(store.create(name + ".b", {out}, Init::kZeros, rng)) {}

  // x[..., in] -> [..., out]
  Tensor operator()(const Tensor& x) const { return linear(x, w_, b_); }

  const Tensor& weight() const { return w_; }
  const Tensor& bias() const { return b_; }

 private:
  Tensor w_;
  Tensor b_;
};

// Tensor contraction layer: E[B, M_in, d] -> E ⊗ W + B with W[M_in, d, M_out, d]
// and B[M_out, d].
class Tcl {
 public:
  Tcl() = default;
  Tcl(ParamStore& store, const std::string& name, std::size_t m_in, std::size_t m_out,
      std::size_t d, Rng& rng)
      : w_(store.create(name + ".W", {m_in, d, m_out, d}, Init::kUniformFanIn, rng, m_in * d)),
        b_(store.create(name + ".B", {m_out, d}, Init::kZeros, rng)) {}

  Tensor operator()(const Tensor& e) const { return contract(e, w_, b_); }

  const Tensor& weight() const { return w_; }
  const Tensor& bias() const { return b_; }

 private:
  Tensor w_;
  Tensor b_;
};

// Maps a preprocessed row to one d-wide token per feature: numerical feature i
// gives x_i w_i + b_i, categorical feature j gives onehot_j W_j + b_j (the row
// of W_j picked by the one-hot). The target is embedded the same way as a
// categorical feature over the class set.
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(ParamStore& store, const std::string& name, const FeatureLayout& layout,
            std::size_t d, Rng& rng)
      : layout_(layout), d_(d) {
    const std::size_t mn = layout.num_numerical;
    if (mn > 0) {
      num_w_ = store.create(name + ".num.w", {mn, d}, Init::kUniformFanIn, rng, 1);
      num_b_ = store.create(name + ".num.b", {mn, d}, Init::kZeros, rng);
    }
    for (std::size_t j = 0; j < layout.num_categorical(); ++j) {
      const std::size_t c = layout.category_sizes[j];
      const std::string p = name + ".cat" + std::to_string(j);
      cat_w_.push_back(store.create(p + ".W", {c, d}, Init::kUniformFanIn, rng, c));
      cat_b_.push_back(store.create(p + ".b", {d}, Init::kZeros, rng));
    }
    y_w_ = store.create(name + ".target.W", {layout.num_classes, d}, Init::kUniformFanIn, rng,
                        layout.num_classes);
    y_b_ = store.create(name + ".target.b", {d}, Init::kZeros, rng);
  }

  // x_num[B, M_n] (ignored when M_n = 0), onehot[B, sum |C_j|] (ignored when
  // there are no categorical features) -> E[B, M, d].
  Tensor features(const Tensor& x_num, const Tensor& onehot) const {
    std::vector<Tensor> parts;
    std::size_t batch = 0;
    if (layout_.num_numerical > 0) {
      if (x_num.rank() != 2 || x_num.shape()[1] != layout_.num_numerical) {
        throw DimensionError("tokenizer: numerical input " + x_num.shape().str() +
                             " does not have " + std::to_string(layout_.num_numerical) +
                             " columns");
      }
      batch = x_num.shape()[0];
      parts.push_back(add_bias(embed_scalars(x_num, num_w_), num_b_));
    }
    if (layout_.num_categorical() > 0) {
      if (onehot.rank() != 2 || onehot.shape()[1] != layout_.onehot_width()) {
        throw DimensionError("tokenizer: one-hot input " + onehot.shape().str() +
                             " does not have " + std::to_string(layout_.onehot_width()) +
                             " columns");
      }
      if (batch != 0 && onehot.shape()[0] != batch) {
        throw DimensionError("tokenizer: batch sizes of numerical and one-hot inputs differ");
      }
      batch = onehot.shape()[0];
      std::size_t offset = 0;
      for (std::size_t j = 0; j < layout_.num_categorical(); ++j) {
        const std::size_t c = layout_.category_sizes[j];
        Tensor token = linear(slice(onehot, 1, offset, c), cat_w_[j], cat_b_[j]);
        parts.push_back(reshape(token, {batch, 1, d_}));
        offset += c;
      }
    }
    return parts.size() == 1 ? parts[0] : concat(parts, 1);
  }

  // y_onehot[B, N_c] -> [B, 1, d]
  Tensor target(const Tensor& y_onehot) const {
    if (y_onehot.rank() != 2 || y_onehot.shape()[1] != layout_.num_classes) {
      throw DimensionError("tokenizer: target input " + y_onehot.shape().str() +
                           " does not have " + std::to_string(layout_.num_classes) +
                           " columns");
    }
    const std::size_t batch = y_onehot.shape()[0];
    return reshape(linear(y_onehot, y_w_, y_b_), {batch, 1, d_});
  }

  // E, or R = E ⊕ y when `y_onehot` is given: [B, M (+1), d].
  Tensor operator()(const Tensor& x_num, const Tensor& onehot,
                    const Tensor* y_onehot = nullptr) const {
    Tensor e = features(x_num, onehot);
    if (y_onehot == nullptr) return e;
    return concat({e, target(*y_onehot)}, 1);
  }

  const FeatureLayout& layout() const { return layout_; }
  std::size_t width() const { return d_; }

 private:
  FeatureLayout layout_;
  std::size_t d_ = 0;
  Tensor num_w_, num_b_;
  std::vector<Tensor> cat_w_, cat_b_;
  Tensor y_w_, y_b_;
};

// Detokenizer output: numerical predictions and raw logits per categorical
// feature. Softmax is applied only when materializing samples.
struct Reconstruction {
  Tensor numeric;               // [B, M_n]; undefined when M_n = 0
  std::vector<Tensor> logits;   // [B, |C_j|] each
};

class Detokenizer {
 public:
  Detokenizer() = default;
  Detokenizer(ParamStore& store, const std::string& name, const FeatureLayout& layout,
              std::size_t d, Rng& rng)
      : layout_(layout), d_(d) {
    const std::size_t mn = layout.num_numerical;
    if (mn > 0) {
      num_w_ = store.create(name + ".num.w", {mn, d}, Init::kUniformFanIn, rng, d);
      num_b_ = store.create(name + ".num.b", {mn}, Init::kZeros, rng);
    }
    for (std::size_t j = 0; j < layout.num_categorical(); ++j) {
      const std::size_t c = layout.category_sizes[j];
      const std::string p = name + ".cat" + std::to_string(j);
      cat_w_.push_back(store.create(p + ".W", {d, c}, Init::kUniformFanIn, rng, d));
      cat_b_.push_back(store.create(p + ".b", {c}, Init::kZeros, rng));
    }
  }

  // e[B, M, d]
  Reconstruction operator()(const Tensor& e) const {
    if (e.rank() != 3 || e.shape()[1] != layout_.num_features() || e.shape()[2] != d_) {
      throw DimensionError("detokenizer: expected [B x " +
                           std::to_string(layout_.num_features()) + " x " +
                           std::to_string(d_) + "], got " + e.shape().str());
    }
    const std::size_t batch = e.shape()[0];
    const std::size_t mn = layout_.num_numerical;
    Reconstruction out;
    if (mn > 0) {
      out.numeric = add_bias(rowwise_dot(slice(e, 1, 0, mn), num_w_), num_b_);
    }
    for (std::size_t j = 0; j < layout_.num_categorical(); ++j) {
      Tensor token = reshape(slice(e, 1, mn + j, 1), {batch, d_});
      out.logits.push_back(linear(token, cat_w_[j], cat_b_[j]));
    }
    return out;
  }

  const FeatureLayout& layout() const { return layout_; }

 private:
  FeatureLayout layout_;
  std::size_t d_ = 0;
  Tensor num_w_, num_b_;
  std::vector<Tensor> cat_w_, cat_b_;
};

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t heads = 1;
  std::size_t ffn_hidden = 128;

  bool operator==(const TransformerConfig&) const = default;
};

// Self-attention with learned d x d query/key/value/output projections.
// Heads split the model width evenly.
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                Rng& rng)
      : q_(store, name + ".q", d, d, rng),
        k_(store, name + ".k", d, d, rng),
        v_(store, name + ".v", d, d, rng),
        o_(store, name + ".o", d, d, rng),
        heads_(heads) {
    if (heads == 0 || d % heads != 0) {
      throw ContractViolation("attention heads must divide the model width");
    }
  }

  // x[B, T, d] -> [B, T, d]. Appends each head's [B, T, T] weights to
  // `weights` when given.
  Tensor operator()(const Tensor& x, std::vector<Tensor>* weights = nullptr) const {
    return o_(attention(q_(x), k_(x), v_(x), heads_, weights));
  }

 private:
  Linear q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

// Pre-norm transformer layers without dropout or positional encodings:
//   T += Attention(LayerNorm(T));  T += FFN(LayerNorm(T))
// with FFN = Linear(d, hidden) -> SiLU -> Linear(hidden, d).
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(ParamStore& store, const std::string& name, std::size_t d,
                   const TransformerConfig& config, Rng& rng) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      Block b;
      b.ln1_gain = store.create(p + ".ln1.gain", {d}, Init::kOnes, rng);
      b.ln1_bias = store.create(p + ".ln1.bias", {d}, Init::kZeros, rng);
      b.attention = SelfAttention(store, p + ".attn", d, config.heads, rng);
      b.ln2_gain = store.create(p + ".ln2.gain", {d}, Init::kOnes, rng);
      b.ln2_bias = store.create(p + ".ln2.bias", {d}, Init::kZeros, rng);
      b.ffn1 = Linear(store, p + ".ffn1", d, config.ffn_hidden, rng);
      b.ffn2 = Linear(store, p + ".ffn2", config.ffn_hidden, d, rng);
      blocks_.push_back(std::move(b));
    }
  }

  Tensor operator()(Tensor t, std::vector<Tensor>* weights = nullptr) const {
    if (t.rank() != 3) throw DimensionError("transformer: expected [B x T x d], got " + t.shape().str());
    for (const Block& b : blocks_) {
      t = t + b.attention(layer_norm(t, b.ln1_gain, b.ln1_bias), weights);
      t = t + feed_forward(layer_norm(t, b.ln2_gain, b.ln2_bias), b.ffn1.weight(),
                           b.ffn1.bias(), b.ffn2.weight(), b.ffn2.bias());
    }
    return t;
  }

 private:
  struct Block {
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    SelfAttention attention;
    Linear ffn1, ffn2;
  };
  std::vector<Block> blocks_;
};

}  // namespace tcvae
