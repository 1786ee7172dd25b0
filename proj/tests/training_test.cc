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

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "fixtures.hpp"
#include "tcvae/data/toy.hpp"
#include "tcvae/train/optim.hpp"
#include "tcvae/train/trainer.hpp"

namespace tcvae {
namespace {

Tensor scalar_param(double value, double grad) {
  Tensor p({1}, {value}, true);
  if (grad != 0.0) detail::grad_of(p)[0] = grad;
  return p;
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  std::vector<Tensor> params = {scalar_param(0.0, 1.0)};
  AdamState state;
  adam_step(params, state, 1e-3, 0.0);
  EXPECT_NEAR(params[0].data()[0], -1e-3, 1e-10);
  EXPECT_EQ(state.t, 1u);
}

TEST(AdamTest, DecayOnlyStep) {
  std::vector<Tensor> params = {Tensor({1}, {1.0}, true)};
  AdamState state;
  adam_step(params, state, 1e-3, 0.9);
  EXPECT_DOUBLE_EQ(params[0].data()[0], 0.9991);
}

TEST(AdamTest, ZeroGradientWithoutDecayLeavesParameters) {
  std::vector<Tensor> params = {Tensor({2, 2}, {1.0, -2.0, 3.0, 0.5}, true)};
  params[0].zero_grad();
  const std::vector<double> before = params[0].values();
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(params, state, 1e-3, 0.0);
  EXPECT_EQ(params[0].values(), before);
  EXPECT_EQ(state.t, 5u);
}

TEST(AdamTest, MatchesHandEvaluatedRecursion) {
  const std::vector<double> grads = {0.3, -1.2, 0.7, 0.0, 2.5};
  std::vector<Tensor> params = {Tensor({1}, {0.4}, true)};
  AdamState state;
  double theta = 0.4, m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    params[0].zero_grad();
    detail::grad_of(params[0])[0] = grads[t - 1];
    adam_step(params, state, 2e-3, 0.1);
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    theta = theta - 2e-3 * 0.1 * theta - 2e-3 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(params[0].data()[0], theta, 1e-15);
  }
}

TEST(CosineTest, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3), 5e-4, 1e-18);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-3), 0.0, 1e-18);
  EXPECT_THROW(cosine_lr(101, 100, 1e-3), ContractViolation);
}

TEST(BatchSizeTest, Rule) {
  EXPECT_EQ(pick_batch_size(120), 32u);
  EXPECT_EQ(pick_batch_size(12000), 1024u);
  EXPECT_EQ(pick_batch_size(512), 128u);
  EXPECT_EQ(pick_batch_size(1), 32u);
  EXPECT_THROW(pick_batch_size(0), ContractViolation);
}

TEST(EarlyStopperTest, ImprovingLossesKeepPatienceAtZero) {
  EarlyStopper s;
  for (double loss = 10.0; loss > 0.0; loss -= 0.5) {
    EXPECT_FALSE(s.update(loss));
    EXPECT_EQ(s.patience(), 0u);
  }
}

TEST(EarlyStopperTest, SubThresholdImprovementCounts) {
  EarlyStopper s;
  s.update(5.000);
  s.update(4.9995);
  EXPECT_EQ(s.patience(), 1u);
}

TEST(EarlyStopperTest, StopsExactlyAtLimit) {
  EarlyStopper s;
  s.update(1.0);
  for (int i = 1; i <= 24; ++i) {
    EXPECT_FALSE(s.update(1.0));
    EXPECT_EQ(s.patience(), static_cast<std::size_t>(i));
  }
  EXPECT_TRUE(s.update(1.0));
  EXPECT_EQ(s.patience(), 25u);
}

TEST(EarlyStopperTest, ReferenceChoice) {
  // A regression followed by a partial recovery improves on the previous
  // epoch but not on the best one.
  EarlyStopper previous(25, 1e-3, EarlyStopper::Reference::kPrevious);
  EarlyStopper best(25, 1e-3, EarlyStopper::Reference::kBest);
  for (double loss : {2.0, 3.0, 2.5}) {
    previous.update(loss);
    best.update(loss);
  }
  EXPECT_EQ(previous.patience(), 1u);
  EXPECT_EQ(best.patience(), 2u);
  EXPECT_EQ(EarlyStopper::parse_reference("best"), EarlyStopper::Reference::kBest);
  EXPECT_THROW(EarlyStopper::parse_reference("last"), ContractViolation);
  EXPECT_THROW(EarlyStopper(0), ContractViolation);
}

TEST(EarlyStopperTest, PatienceNeverDecreases) {
  Rng rng(3);
  for (auto ref : {EarlyStopper::Reference::kPrevious, EarlyStopper::Reference::kBest}) {
    EarlyStopper s(1000, 1e-3, ref);
    std::size_t last = 0;
    for (int i = 0; i < 500; ++i) {
      s.update(rng.uniform());
      EXPECT_GE(s.patience(), last);
      last = s.patience();
    }
  }
}

struct ToyRun {
  Dataset data;
  EncodedTable train;
  EncodedTable val;
};

ToyRun circles(std::size_t n, std::uint64_t seed) {
  const Table t = toy_generate("circles", n, seed);
  ToyRun run;
  run.data = preprocess(t, make_split(target_indices(t), 0.2, 0.15, seed));
  run.train = run.data.part(run.data.split.train);
  run.val = run.data.part(run.data.split.val);
  return run;
}

ModelSpec toy_spec(Variant v, const Dataset& d) {
  ModelSpec s;
  s.variant = v;
  s.layout = FeatureLayout::from_schema(d.schema());
  return s;
}

TEST(TrainTest, RejectsEmptySplits) {
  const ToyRun run = circles(200, 1);
  Vae model(toy_spec(Variant::kBase, run.data), 1);
  EXPECT_THROW(train(model, EncodedTable{}, run.val, {}), ContractViolation);
  EXPECT_THROW(train(model, run.train, EncodedTable{}, {}), ContractViolation);
}

TEST(TrainTest, LearningRateFollowsCosineEveryEpoch) {
  const ToyRun run = circles(300, 2);
  Vae model(toy_spec(Variant::kBase, run.data), 2);
  TrainConfig c;
  c.max_epochs = 12;
  c.early_stopping = false;
  const TrainResult r = train(model, run.train, run.val, c);
  ASSERT_EQ(r.log.epochs.size(), 12u);
  const std::uint64_t per_epoch = r.log.total_steps / c.max_epochs;
  double previous = INFINITY;
  for (const EpochRecord& e : r.log.epochs) {
    const std::uint64_t first_step = (e.epoch - 1) * per_epoch;
    const double formula =
        1e-3 * 0.5 *
        (1.0 + std::cos(std::numbers::pi * static_cast<double>(first_step) /
                        static_cast<double>(r.log.total_steps)));
    EXPECT_LT(std::abs(e.lr - formula), 1e-15);
    EXPECT_LE(e.lr, previous);
    previous = e.lr;
    EXPECT_EQ(e.step, e.epoch * per_epoch);
  }
}

TEST(TrainTest, StopEpochIsFirstEpochAtPatienceLimit) {
  const ToyRun run = circles(300, 3);
  Vae model(toy_spec(Variant::kBase, run.data), 3);
  TrainConfig c;
  c.max_epochs = 200;
  c.patience_limit = 3;
  c.min_delta = 10.0;  // nothing counts as an improvement
  const TrainResult r = train(model, run.train, run.val, c);
  EXPECT_TRUE(r.log.early_stopped);
  ASSERT_EQ(r.log.epochs.size(), 4u);
  for (std::size_t i = 0; i < r.log.epochs.size(); ++i) {
    EXPECT_EQ(r.log.epochs[i].patience, i);
  }
}

TEST(TrainTest, IdenticalInputsGiveBitIdenticalParameters) {
  const ToyRun run = circles(300, 4);
  std::vector<std::vector<double>> finals;
  for (int rep = 0; rep < 2; ++rep) {
    Vae model(toy_spec(Variant::kTensorConFormer, run.data), 5);
    TrainConfig c;
    c.max_epochs = 2;
    c.seed = 9;
    train(model, run.train, run.val, c);
    std::vector<double> flat;
    for (const Tensor& p : model.params().tensors()) {
      flat.insert(flat.end(), p.data().begin(), p.data().end());
    }
    finals.push_back(std::move(flat));
  }
  EXPECT_EQ(finals[0], finals[1]);
}

TEST(TrainTest, JsonLinesLog) {
  const ToyRun run = circles(200, 5);
  Vae model(toy_spec(Variant::kBase, run.data), 1);
  TrainConfig c;
  c.max_epochs = 3;
  std::size_t seen = 0;
  const TrainResult r = train(model, run.train, run.val, c, [&](const EpochRecord&) { ++seen; });
  EXPECT_EQ(seen, 3u);
  const std::string log = r.log.jsonl();
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
  for (const char* key : {"epoch", "train_loss", "val_loss", "lr", "patience"}) {
    EXPECT_TRUE(first.contains(key)) << key;
  }
}

TEST(TrainTest, TensorContractedLossDecreasesOnCircles) {
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ToyRun run = circles(2000, seed);
    Vae model(toy_spec(Variant::kTensorContracted, run.data), seed);
    TrainConfig c;
    c.max_epochs = 500;
    c.seed = seed;
    std::vector<double> losses;
    try {
      TrainConfig first = c;
      first.early_stopping = false;
      // Same schedule horizon as a 500-epoch run, stopped after 10 epochs.
      train(model, run.train, run.val, first, [&](const EpochRecord& e) {
        losses.push_back(e.train_loss);
        if (losses.size() == 10) throw std::runtime_error("done");
      });
    } catch (const std::runtime_error&) {
    }
    ASSERT_EQ(losses.size(), 10u);
    bool strict = true;
    for (std::size_t i = 1; i < losses.size(); ++i) strict = strict && losses[i] < losses[i - 1];
    decreasing += strict;
  }
  EXPECT_GE(decreasing, 9);
}

TEST(TrainTest, ReconstructionErrorFallsWithTraining) {
  // One numerical feature plus the class.
  Table t = toy_generate("circles", 400, 6);
  t.columns.erase(t.columns.begin() + 1);
  const Dataset data = preprocess(t, make_split(target_indices(t), 0.2, 0.15, 6));
  const EncodedTable val = data.part(data.split.val);
  Vae model(toy_spec(Variant::kTensorContracted, data), 6);
  std::vector<std::size_t> idx(val.rows);
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = make_batch(val, idx, model.spec().layout);
  auto mse = [&] {
    NoGradScope no_grad;
    const Reconstruction r = model.decode(model.encode(b).mu, b.y_onehot);
    double s = 0.0;
    for (std::size_t i = 0; i < r.numeric.numel(); ++i) {
      const double d = r.numeric.data()[i] - b.x_num.data()[i];
      s += d * d;
    }
    return s / static_cast<double>(r.numeric.numel());
  };
  std::vector<double> errors = {mse()};
  TrainConfig c;
  c.max_epochs = 40;
  c.early_stopping = false;
  c.seed = 6;
  train(model, data.part(data.split.train), val, c, [&](const EpochRecord& e) {
    if (e.epoch % 2 == 0 && e.epoch <= 6) errors.push_back(mse());
  });
  ASSERT_EQ(errors.size(), 4u);
  for (std::size_t i = 1; i < errors.size(); ++i) EXPECT_LT(errors[i], errors[i - 1]) << i;
  EXPECT_LT(mse(), errors.front());
}

}  // namespace
}  // namespace tcvae
