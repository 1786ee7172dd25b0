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

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/nn/count.hpp"
#include "tcvae/nn/layers.hpp"

namespace tcvae {

enum class Variant {
  kBase,
  kTensorContracted,
  kTransformed,
  kTensorConFormer,
  kTcfEncOnly,  // transformer kept in the encoder only
  kTcfDecOnly,  // transformer kept in the decoder only
};

inline constexpr std::array<Variant, 6> kAllVariants = {
    Variant::kBase,          Variant::kTensorContracted, Variant::kTransformed,
    Variant::kTensorConFormer, Variant::kTcfEncOnly,     Variant::kTcfDecOnly};

// Short names used on the command line and in files.
inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kTensorContracted: return "tc";
    case Variant::kTransformed: return "tf";
    case Variant::kTensorConFormer: return "tcf";
    case Variant::kTcfEncOnly: return "tcf-enc";
    case Variant::kTcfDecOnly: return "tcf-dec";
  }
  return "?";
}

inline std::string variant_display_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "Base";
    case Variant::kTensorContracted: return "TensorContracted";
    case Variant::kTransformed: return "Transformed";
    case Variant::kTensorConFormer: return "TensorConFormer";
    case Variant::kTcfEncOnly: return "TensorConFormer(Enc)";
    case Variant::kTcfDecOnly: return "TensorConFormer(Dec)";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (s == variant_name(v) || s == variant_display_name(v)) return v;
  }
  throw ContractViolation("unknown model variant '" + std::string(s) + "'");
}

struct ModelSpec {
  Variant variant = Variant::kTensorConFormer;
  FeatureLayout layout;
  std::size_t d = 4;
  std::size_t tcl_hidden = 96;      // H'
  std::size_t tcl_latent = 32;      // L'
  std::size_t linear_hidden = 512;  // H
  std::size_t linear_latent = 256;  // L
  TransformerConfig transformer;

  bool uses_tokens() const { return variant != Variant::kBase; }

  void validate() const {
    if (d == 0 || tcl_hidden == 0 || tcl_latent == 0 || linear_hidden == 0 || linear_latent == 0) {
      throw ContractViolation("model widths must be positive");
    }
    if (layout.num_features() == 0) throw ContractViolation("model needs at least one feature");
    if (layout.num_classes == 0) throw ContractViolation("model needs at least one class");
    if (transformer.layers == 0 || transformer.ffn_hidden == 0 || transformer.heads == 0 ||
        d % transformer.heads != 0) {
      throw ContractViolation("invalid transformer configuration");
    }
  }

  bool operator==(const ModelSpec&) const = default;
};

inline nlohmann::json to_json(const ModelSpec& s) {
  return {{"variant", variant_name(s.variant)},
          {"d", s.d},
          {"tcl_hidden", s.tcl_hidden},
          {"tcl_latent", s.tcl_latent},
          {"linear_hidden", s.linear_hidden},
          {"linear_latent", s.linear_latent},
          {"transformer",
           {{"layers", s.transformer.layers},
            {"heads", s.transformer.heads},
            {"ffn_hidden", s.transformer.ffn_hidden}}},
          {"layout",
           {{"num_numerical", s.layout.num_numerical},
            {"category_sizes", s.layout.category_sizes},
            {"num_classes", s.layout.num_classes}}}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.d = j.at("d").get<std::size_t>();
  s.tcl_hidden = j.at("tcl_hidden").get<std::size_t>();
  s.tcl_latent = j.at("tcl_latent").get<std::size_t>();
  s.linear_hidden = j.at("linear_hidden").get<std::size_t>();
  s.linear_latent = j.at("linear_latent").get<std::size_t>();
  const auto& t = j.at("transformer");
  s.transformer = {t.at("layers").get<std::size_t>(), t.at("heads").get<std::size_t>(),
                   t.at("ffn_hidden").get<std::size_t>()};
  const auto& l = j.at("layout");
  s.layout.num_numerical = l.at("num_numerical").get<std::size_t>();
  s.layout.category_sizes = l.at("category_sizes").get<std::vector<std::size_t>>();
  s.layout.num_classes = l.at("num_classes").get<std::size_t>();
  s.validate();
  return s;
}

// Closed-form learnable-parameter count of a variant.
inline std::size_t count_params(const ModelSpec& s) {
  namespace pc = param_count;
  const FeatureLayout& lay = s.layout;
  const std::size_t m = lay.num_features();
  const std::size_t d = s.d;
  const std::size_t hp = s.tcl_hidden;
  const std::size_t lp = s.tcl_latent;
  if (s.variant == Variant::kBase) {
    const std::size_t in = lay.encoded_width() + lay.num_classes;
    return pc::linear(in, s.linear_hidden) + 2 * pc::linear(s.linear_hidden, s.linear_latent) +
           pc::linear(s.linear_latent + lay.num_classes, s.linear_hidden) +
           pc::linear(s.linear_hidden, lay.encoded_width());
  }
  const std::size_t tokens = pc::tokenizer(lay, d) + pc::detokenizer(lay, d);
  const std::size_t tf = pc::transformer(d, s.transformer);
  switch (s.variant) {
    case Variant::kTensorContracted:
      return tokens + pc::tcl(m + 1, hp, d) + 2 * pc::tcl(hp, lp, d) + pc::tcl(lp + 1, hp, d) +
             pc::tcl(hp, m, d);
    case Variant::kTransformed:
      return tokens + 3 * tf + pc::tcl(m + 2, m, d);
    case Variant::kTensorConFormer:
      return tokens + pc::tcl(m + 1, hp, d) + pc::tcl(hp, lp, d) + 2 * tf +
             pc::tcl(lp + 1, hp, d) + pc::tcl(hp, m, d) + tf;
    case Variant::kTcfEncOnly:
      return tokens + pc::tcl(m + 1, hp, d) + pc::tcl(hp, lp, d) + 2 * tf +
             pc::tcl(lp + 1, hp, d) + pc::tcl(hp, m, d);
    case Variant::kTcfDecOnly:
      return tokens + pc::tcl(m + 1, hp, d) + pc::tcl(hp, lp, d) + 2 * pc::tcl(lp, lp, d) +
             pc::tcl(lp + 1, hp, d) + pc::tcl(hp, m, d) + tf;
    default:
      return 0;
  }
}

}  // namespace tcvae
