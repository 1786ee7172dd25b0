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

// Conditional VAE variants. With R = tokenize(x) ⊕ y and S = Z ⊕ y (y the
// target token), the token-based variants are
//
//   TensorContracted  H = SiLU(TCL(R)); μ, logσ² = TCL(H), TCL(H)
//                     Ẽ = TCL(SiLU(TCL(S)))
//   TensorConFormer   H = SiLU(TCL(R)); L = TCL(H); μ, logσ² = Tf(L), Tf'(L)
//                     Ẽ = Tf''(TCL(SiLU(TCL(S))))
//   Transformed       μ, logσ² = Tf(R), Tf'(R);  Ẽ = TCL(Tf''(S))
//
// followed by the detokenizer. The two TensorConFormer ablations swap the
// encoder transformers for TCL heads on L (Dec) or drop the decoder
// transformer (Enc). Base works on the flat row: r = x ⊕ onehot(y),
// h = SiLU(Linear(r)), μ, logσ² = Linear(h), Linear(h), and
// x̃ = Linear(SiLU(Linear(z ⊕ onehot(y)))).

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/ops.hpp"
#include "tcvae/core/random.hpp"
#include "tcvae/data/dataset.hpp"
#include "tcvae/model/spec.hpp"
#include "tcvae/nn/layers.hpp"
#include "tcvae/nn/params.hpp"

namespace tcvae {

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

// Model inputs for a set of rows. Tensors carry no gradient.
struct Batch {
  std::size_t size = 0;
  Tensor x_num;     // [B, M_n]; undefined when M_n = 0
  Tensor onehot;    // [B, sum |C_j|]; undefined without categorical features
  Tensor y_onehot;  // [B, N_c]
  std::vector<std::size_t> labels;
  std::vector<std::vector<std::size_t>> categories;  // per categorical feature
};

inline Tensor onehot_matrix(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= classes) throw DimensionError("class index out of range");
    v[r * classes + labels[r]] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(v));
}

inline Batch make_batch(const EncodedTable& data, std::span<const std::size_t> rows,
                        const FeatureLayout& layout) {
  if (rows.empty()) throw ContractViolation("empty batch");
  if (data.num_numerical != layout.num_numerical || data.onehot_width != layout.onehot_width()) {
    throw DimensionError("data does not match the model's feature layout");
  }
  Batch b;
  b.size = rows.size();
  const std::size_t mn = layout.num_numerical;
  const std::size_t w = layout.onehot_width();
  std::vector<double> num(b.size * mn), oh(b.size * w);
  b.categories.assign(layout.num_categorical(), std::vector<std::size_t>(b.size));
  for (std::size_t i = 0; i < b.size; ++i) {
    const std::size_t r = rows[i];
    std::copy_n(data.numeric.begin() + r * mn, mn, num.begin() + i * mn);
    std::copy_n(data.onehot.begin() + r * w, w, oh.begin() + i * w);
    std::size_t offset = 0;
    for (std::size_t j = 0; j < layout.num_categorical(); ++j) {
      const double* block = data.onehot.data() + r * w + offset;
      b.categories[j][i] = static_cast<std::size_t>(
          std::max_element(block, block + layout.category_sizes[j]) - block);
      offset += layout.category_sizes[j];
    }
    b.labels.push_back(data.labels[r]);
  }
  if (mn > 0) b.x_num = Tensor({b.size, mn}, std::move(num));
  if (w > 0) b.onehot = Tensor({b.size, w}, std::move(oh));
  b.y_onehot = onehot_matrix(b.labels, layout.num_classes);
  return b;
}

struct Posterior {
  Tensor mu;
  Tensor logvar;  // clamped to [kLogVarMin, kLogVarMax]
};

// Z = μ + exp(logσ² / 2) ⊙ ε.
inline Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps) {
  if (mu.shape() != logvar.shape() || mu.shape() != eps.shape()) {
    throw DimensionError("reparameterize: shapes " + mu.shape().str() + ", " +
                         logvar.shape().str() + ", " + eps.shape().str());
  }
  return mu + exp(scale(clamp(logvar, kLogVarMin, kLogVarMax), 0.5)) * eps;
}

inline Tensor standard_normal(Shape shape, Rng& rng) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = rng.normal();
  return Tensor(shape, std::move(v));
}

inline Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng) {
  return reparameterize(mu, logvar, standard_normal(mu.shape(), rng));
}

// ½ Σ (μ² + σ² − 1 − logσ²) over all latent entries, averaged over the batch.
inline Tensor kl_divergence(const Tensor& mu, const Tensor& logvar) {
  const Tensor lv = clamp(logvar, kLogVarMin, kLogVarMax);
  const Tensor terms = square(mu) + exp(lv) - lv - Tensor::scalar(1.0);
  return scale(sum(terms), 0.5 / static_cast<double>(mu.shape()[0]));
}

// Squared error over numerical features plus cross-entropy over categorical
// features, summed per row and averaged over the batch.
inline Tensor reconstruction_loss(const Reconstruction& r, const Batch& b) {
  Tensor total;
  if (r.numeric.defined()) total = sum(square(r.numeric - b.x_num));
  for (std::size_t j = 0; j < r.logits.size(); ++j) {
    Tensor ce = sum(cross_entropy(r.logits[j], b.categories[j]));
    total = total.defined() ? total + ce : ce;
  }
  return scale(total, 1.0 / static_cast<double>(b.size));
}

struct ElboTerms {
  Tensor loss;  // negative ELBO = recon + KL
  double recon = 0.0;
  double kl = 0.0;
};

class Vae {
 public:
  Vae(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    Rng rng(mix_seed(seed, 0x1417));
    build(rng);
  }

  Vae(const Vae&) = delete;
  Vae& operator=(const Vae&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Per-row latent shape.
  Shape latent_shape() const {
    switch (spec_.variant) {
      case Variant::kBase: return Shape{spec_.linear_latent};
      case Variant::kTransformed: return Shape{spec_.layout.num_features() + 1, spec_.d};
      default: return Shape{spec_.tcl_latent, spec_.d};
    }
  }

  Shape batch_latent_shape(std::size_t batch) const {
    const Shape s = latent_shape();
    return s.rank() == 1 ? Shape{batch, s[0]} : Shape{batch, s[0], s[1]};
  }

  Posterior encode(const Batch& b) const {
    Tensor mu, logvar;
    if (spec_.variant == Variant::kBase) {
      std::vector<Tensor> parts;
      if (b.x_num.defined()) parts.push_back(b.x_num);
      if (b.onehot.defined()) parts.push_back(b.onehot);
      parts.push_back(b.y_onehot);
      const Tensor h = silu(enc_lin_(concat(parts, 1)));
      mu = enc_mu_lin_(h);
      logvar = enc_lv_lin_(h);
    } else {
      const Tensor r = tokenizer_(b.x_num, b.onehot, &b.y_onehot);
      switch (spec_.variant) {
        case Variant::kTensorContracted: {
          const Tensor h = silu(enc_tcl1_(r));
          mu = enc_mu_tcl_(h);
          logvar = enc_lv_tcl_(h);
          break;
        }
        case Variant::kTransformed:
          mu = enc_mu_tf_(r);
          logvar = enc_lv_tf_(r);
          break;
        case Variant::kTcfDecOnly: {
          const Tensor l = enc_tcl2_(silu(enc_tcl1_(r)));
          mu = enc_mu_tcl_(l);
          logvar = enc_lv_tcl_(l);
          break;
        }
        default: {  // TensorConFormer and its encoder-only ablation
          const Tensor l = enc_tcl2_(silu(enc_tcl1_(r)));
          mu = enc_mu_tf_(l);
          logvar = enc_lv_tf_(l);
        }
      }
    }
    return {mu, clamp(logvar, kLogVarMin, kLogVarMax)};
  }

  Reconstruction decode(const Tensor& z, const Tensor& y_onehot) const {
    if (z.shape() != batch_latent_shape(z.shape()[0])) {
      throw DimensionError("decode: latent " + z.shape().str() + " does not match " +
                           latent_shape().str() + " per row");
    }
    if (spec_.variant == Variant::kBase) {
      const Tensor out = dec_out_lin_(silu(dec_lin_(concat({z, y_onehot}, 1))));
      return split_flat(out);
    }
    return detokenizer_(decode_tokens(z, y_onehot));
  }

  // Decoder output tokens [B, M, d] that feed the detokenizer. Token-based
  // variants only.
  Tensor decode_tokens(const Tensor& z, const Tensor& y_onehot) const {
    if (spec_.variant == Variant::kBase) {
      throw ContractViolation("the Base variant has no output tokens");
    }
    if (z.shape() != batch_latent_shape(z.shape()[0])) {
      throw DimensionError("decode: latent " + z.shape().str() + " does not match " +
                           latent_shape().str() + " per row");
    }
    const Tensor s = concat({z, tokenizer_.target(y_onehot)}, 1);
    Tensor e;
    switch (spec_.variant) {
      case Variant::kTensorContracted:
      case Variant::kTcfEncOnly:
        e = dec_tcl2_(silu(dec_tcl1_(s)));
        break;
      case Variant::kTransformed:
        e = dec_tcl2_(dec_tf_(s));
        break;
      default:  // TensorConFormer and its decoder-only ablation
        e = dec_tf_(dec_tcl2_(silu(dec_tcl1_(s))));
    }
    return e;
  }

  // Negative ELBO. `rng` draws ε; without it Z = μ.
  ElboTerms elbo(const Batch& b, Rng* rng) const {
    const Posterior q = encode(b);
    const Tensor z = rng != nullptr ? reparameterize(q.mu, q.logvar, *rng) : q.mu;
    const Tensor recon = reconstruction_loss(decode(z, b.y_onehot), b);
    const Tensor kl = kl_divergence(q.mu, q.logvar);
    ElboTerms t{recon + kl, recon.item(), kl.item()};
    if (!std::isfinite(t.loss.item())) {
      std::ostringstream msg;
      msg << "non-finite loss (recon " << t.recon << ", kl " << t.kl << ") for "
          << variant_display_name(spec_.variant);
      throw NumericalError(msg.str());
    }
    return t;
  }

 private:
  void build(Rng& rng) {
    const FeatureLayout& lay = spec_.layout;
    const std::size_t m = lay.num_features();
    const std::size_t d = spec_.d;
    const std::size_t hp = spec_.tcl_hidden;
    const std::size_t lp = spec_.tcl_latent;
    const Variant v = spec_.variant;
    auto& p = params_;
    if (v == Variant::kBase) {
      const std::size_t in = lay.encoded_width() + lay.num_classes;
      enc_lin_ = Linear(p, "encoder.hidden", in, spec_.linear_hidden, rng);
      enc_mu_lin_ = Linear(p, "encoder.mu", spec_.linear_hidden, spec_.linear_latent, rng);
      enc_lv_lin_ = Linear(p, "encoder.logvar", spec_.linear_hidden, spec_.linear_latent, rng);
      dec_lin_ = Linear(p, "decoder.hidden", spec_.linear_latent + lay.num_classes,
                        spec_.linear_hidden, rng);
      dec_out_lin_ = Linear(p, "decoder.out", spec_.linear_hidden, lay.encoded_width(), rng);
      return;
    }
    tokenizer_ = Tokenizer(p, "tokenizer", lay, d, rng);
    const TransformerConfig& tf = spec_.transformer;
    switch (v) {
      case Variant::kTensorContracted:
        enc_tcl1_ = Tcl(p, "encoder.hidden", m + 1, hp, d, rng);
        enc_mu_tcl_ = Tcl(p, "encoder.mu", hp, lp, d, rng);
        enc_lv_tcl_ = Tcl(p, "encoder.logvar", hp, lp, d, rng);
        dec_tcl1_ = Tcl(p, "decoder.hidden", lp + 1, hp, d, rng);
        dec_tcl2_ = Tcl(p, "decoder.out", hp, m, d, rng);
        break;
      case Variant::kTransformed:
        enc_mu_tf_ = TransformerStack(p, "encoder.mu", d, tf, rng);
        enc_lv_tf_ = TransformerStack(p, "encoder.logvar", d, tf, rng);
        dec_tf_ = TransformerStack(p, "decoder.transformer", d, tf, rng);
        dec_tcl2_ = Tcl(p, "decoder.out", m + 2, m, d, rng);
        break;
      default:
        enc_tcl1_ = Tcl(p, "encoder.hidden", m + 1, hp, d, rng);
        enc_tcl2_ = Tcl(p, "encoder.latent", hp, lp, d, rng);
        if (v == Variant::kTcfDecOnly) {
          enc_mu_tcl_ = Tcl(p, "encoder.mu", lp, lp, d, rng);
          enc_lv_tcl_ = Tcl(p, "encoder.logvar", lp, lp, d, rng);
        } else {
          enc_mu_tf_ = TransformerStack(p, "encoder.mu", d, tf, rng);
          enc_lv_tf_ = TransformerStack(p, "encoder.logvar", d, tf, rng);
        }
        dec_tcl1_ = Tcl(p, "decoder.hidden", lp + 1, hp, d, rng);
        dec_tcl2_ = Tcl(p, "decoder.out", hp, m, d, rng);
        if (v != Variant::kTcfEncOnly) {
          dec_tf_ = TransformerStack(p, "decoder.transformer", d, tf, rng);
        }
    }
    detokenizer_ = Detokenizer(p, "detokenizer", lay, d, rng);
  }

  // Splits Base's flat [B, M'] output into numerical values and logits.
  Reconstruction split_flat(const Tensor& out) const {
    const FeatureLayout& lay = spec_.layout;
    Reconstruction r;
    if (lay.num_numerical > 0) r.numeric = slice(out, 1, 0, lay.num_numerical);
    std::size_t offset = lay.num_numerical;
    for (std::size_t c : lay.category_sizes) {
      r.logits.push_back(slice(out, 1, offset, c));
      offset += c;
    }
    return r;
  }

  ModelSpec spec_;
  ParamStore params_;
  Linear enc_lin_, enc_mu_lin_, enc_lv_lin_, dec_lin_, dec_out_lin_;
  Tokenizer tokenizer_;
  Detokenizer detokenizer_;
  Tcl enc_tcl1_, enc_tcl2_, enc_mu_tcl_, enc_lv_tcl_, dec_tcl1_, dec_tcl2_;
  TransformerStack enc_mu_tf_, enc_lv_tf_, dec_tf_;
};

}  // namespace tcvae
