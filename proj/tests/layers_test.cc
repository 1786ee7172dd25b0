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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tcvae/nn/count.hpp"
#include "tcvae/nn/layers.hpp"
#include "test_util.hpp"

namespace tcvae {
namespace {

using testing::check_gradients;
using testing::random_tensor;

void fill(const Tensor& t, std::vector<double> values) {
  Tensor handle = t;
  ASSERT_EQ(values.size(), handle.numel());
  std::copy(values.begin(), values.end(), handle.mutable_data().begin());
}

void zero_matching(ParamStore& store, const std::string& needle) {
  for (const auto& [name, t] : store.entries()) {
    if (name.find(needle) == std::string::npos) continue;
    Tensor h = t;
    std::fill(h.mutable_data().begin(), h.mutable_data().end(), 0.0);
  }
}

Tensor constant(Shape shape, std::vector<double> v) { return Tensor(shape, std::move(v)); }

// One-hot rows for the given per-feature category choices.
Tensor onehot_rows(const std::vector<std::size_t>& sizes,
                   const std::vector<std::vector<std::size_t>>& picks) {
  std::size_t width = 0;
  for (std::size_t s : sizes) width += s;
  std::vector<double> v(picks.size() * width, 0.0);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    std::size_t offset = 0;
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      v[r * width + offset + picks[r][j]] = 1.0;
      offset += sizes[j];
    }
  }
  return Tensor({picks.size(), width}, std::move(v));
}

TEST(TokenizerTest, NumericTokenIsScaledWeight) {
  ParamStore store;
  Rng rng(1);
  Tokenizer tok(store, "tok", FeatureLayout{1, {}, 2}, 4, rng);
  fill(store.at("tok.num.w"), {1, 0, -1, 0.5});
  fill(store.at("tok.num.b"), {0, 0, 0, 0});
  Tensor e = tok(constant({1, 1}, {2.0}), Tensor());
  EXPECT_EQ(e.shape(), Shape({1, 1, 4}));
  EXPECT_EQ(e.values(), (std::vector<double>{2, 0, -2, 1}));
}

TEST(TokenizerTest, CategoricalTokenIsRowLookup) {
  ParamStore store;
  Rng rng(1);
  Tokenizer tok(store, "tok", FeatureLayout{0, {2}, 2}, 3, rng);
  fill(store.at("tok.cat0.W"), {1, 2, 3, 4, 5, 6});
  fill(store.at("tok.cat0.b"), {0, 0, 0});
  Tensor e = tok(Tensor(), onehot_rows({2}, {{1}}));
  EXPECT_EQ(e.values(), (std::vector<double>{4, 5, 6}));
}

TEST(TokenizerTest, ZeroParametersGiveZeroTokens) {
  ParamStore store;
  Rng rng(1);
  FeatureLayout layout{2, {3, 2}, 2};
  Tokenizer tok(store, "tok", layout, 4, rng);
  zero_matching(store, "tok");
  Tensor y = onehot_rows({2}, {{1}, {0}});
  Tensor e = tok(random_tensor({2, 2}, rng), onehot_rows({3, 2}, {{0, 1}, {2, 0}}), &y);
  EXPECT_EQ(e.shape(), Shape({2, 5, 4}));
  for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

TEST(TokenizerTest, ShapesAndParameterCount) {
  ParamStore store;
  Rng rng(2);
  FeatureLayout layout{3, {2, 5, 4}, 3};
  const std::size_t d = 4;
  Tokenizer tok(store, "tok", layout, d, rng);
  Tensor x = random_tensor({5, 3}, rng);
  Tensor oh = onehot_rows({2, 5, 4}, {{0, 1, 2}, {1, 4, 3}, {0, 0, 0}, {1, 2, 1}, {0, 3, 2}});
  Tensor y = onehot_rows({3}, {{0}, {1}, {2}, {0}, {1}});
  EXPECT_EQ(tok(x, oh).shape(), Shape({5, 6, d}));
  EXPECT_EQ(tok(x, oh, &y).shape(), Shape({5, 7, d}));
  // Feature tokenizer adds d (M' + M); the target embedding adds d (N_c + 1).
  EXPECT_EQ(store.count(), d * (layout.encoded_width() + layout.num_features()) + d * (3 + 1));
  EXPECT_EQ(store.count(), param_count::tokenizer(layout, d));
  EXPECT_THROW(tok(random_tensor({5, 2}, rng), oh), DimensionError);
}

TEST(DetokenizerTest, NumericIsDotProduct) {
  ParamStore store;
  Rng rng(1);
  Detokenizer det(store, "det", FeatureLayout{1, {2}, 2}, 4, rng);
  fill(store.at("det.num.w"), {0.25, 0.25, 0.25, 0.25});
  fill(store.at("det.num.b"), {0});
  zero_matching(store, "det.cat0");
  Reconstruction r = det(constant({1, 2, 4}, {1, 1, 1, 1, 5, 6, 7, 8}));
  EXPECT_DOUBLE_EQ(r.numeric.item(), 1.0);
  ASSERT_EQ(r.logits.size(), 1u);
  EXPECT_EQ(r.logits[0].shape(), Shape({1, 2}));
  Tensor p = softmax(r.logits[0], 1);
  EXPECT_DOUBLE_EQ(p.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(p.data()[1], 0.5);
}

TEST(DetokenizerTest, PreservesSchemaWidthsAndCount) {
  ParamStore store;
  Rng rng(3);
  FeatureLayout layout{2, {3, 2, 6}, 2};
  Tokenizer tok(store, "tok", layout, 4, rng);
  const std::size_t tok_count = store.count();
  Detokenizer det(store, "det", layout, 4, rng);
  EXPECT_EQ(store.count() - tok_count, param_count::detokenizer(layout, 4));
  Reconstruction r = det(tok(random_tensor({3, 2}, rng),
                             onehot_rows({3, 2, 6}, {{0, 0, 0}, {1, 1, 5}, {2, 0, 3}})));
  EXPECT_EQ(r.numeric.shape(), Shape({3, 2}));
  ASSERT_EQ(r.logits.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(r.logits[j].shape(), Shape({3, layout.category_sizes[j]}));
  }
  EXPECT_THROW(det(random_tensor({3, 4, 4}, rng)), DimensionError);
}

TEST(DetokenizerTest, RoundTripTrainingReducesError) {
  ParamStore store;
  Rng rng(5);
  FeatureLayout layout{1, {}, 2};
  Tokenizer tok(store, "tok", layout, 4, rng);
  Detokenizer det(store, "det", layout, 4, rng);
  Tensor x = random_tensor({16, 1}, rng, -1.0, 1.0, false);
  auto loss_fn = [&] {
    Tensor diff = det(tok(x, Tensor())).numeric - x;
    return mean(square(diff));
  };
  double previous = 1e300;
  for (int step = 0; step < 50; ++step) {
    store.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    EXPECT_LT(loss.item(), previous) << "step " << step;
    previous = loss.item();
    tape.backward(loss);
    for (const auto& [name, t] : store.entries()) {
      Tensor h = t;
      for (std::size_t i = 0; i < h.numel(); ++i) h.mutable_data()[i] -= 0.05 * h.grad()[i];
    }
  }
  EXPECT_LT(previous, 1e-2);
}

TEST(TclTest, ZeroWeightsGiveBias) {
  ParamStore store;
  Rng rng(1);
  Tcl tcl(store, "tcl", 3, 2, 2, rng);
  zero_matching(store, "tcl.W");
  fill(store.at("tcl.B"), {1, 2, 3, 4});
  Tensor out = tcl(random_tensor({2, 3, 2}, rng));
  EXPECT_EQ(out.shape(), Shape({2, 2, 2}));
  EXPECT_EQ(out.values(), (std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4}));
}

TEST(TclTest, MatchesContractionOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m_in = 1 + rng.below(5), m_out = 1 + rng.below(5), d = 1 + rng.below(5);
    ParamStore store;
    Tcl tcl(store, "tcl", m_in, m_out, d, rng);
    fill(store.at("tcl.B"), random_tensor({m_out, d}, rng).values());
    Tensor e = random_tensor({m_in, d}, rng);
    std::vector<double> ref = testing::contract_reference(
        e.values(), tcl.weight().values(), m_in, d, m_out, d);
    Tensor out = tcl(reshape(e, {1, m_in, d}));
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(out.data()[i], ref[i] + tcl.bias().data()[i], 1e-12);
    }
  }
}

TEST(TclTest, ParameterCountsFollowClosedForm) {
  ParamStore store;
  Rng rng(1);
  Tcl tcl(store, "tcl", 15, 96, 4, rng);
  EXPECT_EQ(store.count(), param_count::tcl(15, 96, 4));
  // Tokenizer weights (d M') plus TCL weights (M H' d^2), biases excluded.
  FeatureLayout layout{6, {8, 16, 7, 14, 6, 5, 2, 41, 2}, 2};
  ParamStore pipeline;
  Tokenizer tok(pipeline, "tok", layout, 4, rng);
  Tcl first(pipeline, "tcl", layout.num_features(), 96, 4, rng);
  std::size_t weights = 0;
  for (const auto& [name, t] : pipeline.entries()) {
    const bool bias = name.ends_with(".b") || name.ends_with(".B");
    if (!bias && name.find("target") == std::string::npos) weights += t.numel();
  }
  EXPECT_EQ(weights, param_count::tokenize_then_tcl(15, 107, 96, 4));
  EXPECT_EQ(weights, 4u * 107 + 15u * 96 * 16);
}

TEST(ParamCountTest, LinearAndEquivalentWidth) {
  ParamStore store;
  Rng rng(1);
  Linear lin(store, "lin", 107, 219, rng);
  EXPECT_EQ(store.count(), 107u * 219 + 219);
  EXPECT_EQ(param_count::linear(107, 219), store.count());
  const double h = param_count::equivalent_linear_width(15, 107, 96, 4);
  EXPECT_NEAR(h, 4.0 * (1.0 + 15.0 * 96.0 * 4.0 / 107.0), 1e-12);
  EXPECT_EQ(std::lround(h), 219);
  // At that width the bias-free linear layer and the pipeline balance.
  EXPECT_NEAR(107.0 * h, static_cast<double>(param_count::tokenize_then_tcl(15, 107, 96, 4)),
              1e-9);
}

TEST(TransformerTest, ZeroWeightsAreIdentity) {
  ParamStore store;
  Rng rng(1);
  TransformerStack stack(store, "tf", 4, {}, rng);
  zero_matching(store, ".attn.");
  zero_matching(store, ".ffn");
  Tensor x = random_tensor({3, 5, 4}, rng);
  EXPECT_EQ(stack(x).values(), x.values());
}

TEST(TransformerTest, SingleTokenAttendsToItself) {
  ParamStore store;
  Rng rng(2);
  TransformerStack stack(store, "tf", 4, {}, rng);
  std::vector<Tensor> weights;
  stack(random_tensor({2, 1, 4}, rng), &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const Tensor& w : weights) {
    EXPECT_EQ(w.shape(), Shape({2, 1, 1}));
    for (double v : w.values()) EXPECT_EQ(v, 1.0);
  }
}

TEST(TransformerTest, AttentionRowsSumToOne) {
  ParamStore store;
  Rng rng(3);
  TransformerStack stack(store, "tf", 4, {2, 2, 16}, rng);
  std::vector<Tensor> weights;
  Tensor out = stack(random_tensor({3, 6, 4}, rng), &weights);
  EXPECT_EQ(out.shape(), Shape({3, 6, 4}));
  ASSERT_EQ(weights.size(), 4u);  // 2 layers x 2 heads
  for (const Tensor& w : weights) {
    std::vector<double> v = w.values();
    for (std::size_t r = 0; r < v.size() / 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += v[r * 6 + c];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(TransformerTest, PermutationEquivariant) {
  ParamStore store;
  Rng rng(4);
  TransformerStack stack(store, "tf", 4, {}, rng);
  const std::size_t t = 7, d = 4;
  Tensor x = random_tensor({1, t, d}, rng);
  std::vector<std::size_t> perm = {3, 0, 6, 1, 5, 2, 4};
  std::vector<double> xv = x.values(), pv(xv.size());
  for (std::size_t i = 0; i < t; ++i) {
    std::copy_n(xv.begin() + perm[i] * d, d, pv.begin() + i * d);
  }
  std::vector<double> out = stack(x).values();
  std::vector<double> pout = stack(Tensor({1, t, d}, pv)).values();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_NEAR(pout[i * d + j], out[perm[i] * d + j], 1e-10);
    }
  }
}

TEST(TransformerTest, ParameterCount) {
  ParamStore store;
  Rng rng(1);
  TransformerConfig config{2, 1, 128};
  TransformerStack stack(store, "tf", 4, config, rng);
  EXPECT_EQ(store.count(), param_count::transformer(4, config));
  EXPECT_THROW(TransformerStack(store, "bad", 4, {1, 3, 8}, rng), ContractViolation);
}

// Finite-difference checks over every parameter of each layer.
TEST(LayerGradientTest, AllLayers) {
  Rng rng(9);
  ParamStore store;
  FeatureLayout layout{2, {3, 2}, 3};
  const std::size_t d = 4;
  Tokenizer tok(store, "tok", layout, d, rng);
  Tcl tcl(store, "tcl", 5, 3, d, rng);
  TransformerStack stack(store, "tf", d, {2, 2, 8}, rng);
  Tcl back(store, "back", 3, 4, d, rng);
  Detokenizer det(store, "det", layout, d, rng);
  Linear lin(store, "lin", 4, 3, rng);
  // Push LayerNorm parameters away from their initial 1 / 0 values.
  for (const auto& [name, t] : store.entries()) {
    if (name.find(".ln") == std::string::npos) continue;
    Tensor h = t;
    for (double& v : h.mutable_data()) v += 0.3 * rng.normal();
  }
  Tensor x = random_tensor({2, 2}, rng, -2, 2, false);
  Tensor oh = onehot_rows({3, 2}, {{2, 1}, {0, 0}});
  Tensor y = onehot_rows({3}, {{1}, {2}});
  std::vector<std::size_t> labels0 = {2, 0}, labels1 = {1, 1};
  auto loss_fn = [&] {
    Tensor h = silu(tcl(tok(x, oh, &y)));
    Tensor e = back(stack(h));
    Reconstruction r = det(e);
    Tensor loss = sum(square(r.numeric - x));
    loss = loss + sum(cross_entropy(r.logits[0], labels0));
    loss = loss + sum(cross_entropy(r.logits[1], labels1));
    return loss + sum(square(lin(reshape(slice(e, 1, 0, 1), {2, d}))));
  };
  auto result = check_gradients(loss_fn, store.tensors(), 1e-5);
  EXPECT_EQ(result.checked, store.count());
  EXPECT_LE(result.max_relative_error, 1e-4);
}

}  // namespace
}  // namespace tcvae
