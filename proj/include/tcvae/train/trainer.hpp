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

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/core/random.hpp"
#include "tcvae/data/dataset.hpp"
#include "tcvae/model/vae.hpp"
#include "tcvae/train/optim.hpp"

namespace tcvae {

struct TrainConfig {
  double lr_init = 1e-3;
  double weight_decay = 0.9;
  std::size_t patience_limit = 25;
  double min_delta = 1e-3;
  EarlyStopper::Reference stop_reference = EarlyStopper::Reference::kPrevious;
  bool early_stopping = true;
  std::size_t max_epochs = 500;
  std::size_t batch_size = 0;  // 0: pick_batch_size(N_val)
  std::uint64_t seed = 0;
  AdamConfig adam;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr_init", c.lr_init},
          {"weight_decay", c.weight_decay},
          {"patience_limit", c.patience_limit},
          {"min_delta", c.min_delta},
          {"stop_reference",
           c.stop_reference == EarlyStopper::Reference::kBest ? "best" : "previous"},
          {"early_stopping", c.early_stopping},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"adam",
           {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::uint64_t step = 0;  // optimizer steps taken at the end of the epoch
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // learning rate of the epoch's first step
  std::size_t patience = 0;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},     {"step", r.step}, {"train_loss", r.train_loss},
          {"val_loss", r.val_loss}, {"lr", r.lr},     {"patience", r.patience}};
}

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t batch_size = 0;
  std::uint64_t total_steps = 0;  // cosine horizon
  bool early_stopped = false;

  std::string jsonl() const {
    std::string out;
    for (const EpochRecord& r : epochs) out += to_json(r).dump() + "\n";
    return out;
  }
};

struct TrainResult {
  TrainingLog log;
  std::string rng_state;
  std::uint64_t steps = 0;
};

// Mean negative ELBO with Z = μ over all rows, evaluated in chunks.
inline double evaluation_loss(const Vae& model, const EncodedTable& data,
                              std::size_t chunk = 1024) {
  NoGradScope no_grad;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.rows; start += chunk) {
    const std::size_t end = std::min(data.rows, start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(data, idx, model.spec().layout);
    total += model.elbo(b, nullptr).loss.item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.rows);
}

// Minibatch Adam on the negative ELBO with cosine decay over
// max_epochs · steps_per_epoch and per-epoch validation. `on_epoch` sees each
// record as it is produced.
inline TrainResult train(Vae& model, const EncodedTable& train_data, const EncodedTable& val_data,
                         const TrainConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (train_data.rows == 0) throw ContractViolation("training split is empty");
  if (val_data.rows == 0) throw ContractViolation("validation split is empty");
  if (config.max_epochs == 0) throw ContractViolation("max_epochs must be positive");
  if (!(config.lr_init > 0.0)) throw ContractViolation("learning rate must be positive");

  TrainResult result;
  TrainingLog& log = result.log;
  log.batch_size = config.batch_size ? config.batch_size : pick_batch_size(val_data.rows);
  const std::size_t bs = log.batch_size;
  const std::size_t steps_per_epoch = (train_data.rows + bs - 1) / bs;
  log.total_steps = static_cast<std::uint64_t>(config.max_epochs) * steps_per_epoch;

  Rng rng(mix_seed(config.seed, 0x7a1));
  AdamState adam;
  adam.config = config.adam;
  EarlyStopper stopper(config.patience_limit, config.min_delta, config.stop_reference);
  std::vector<Tensor> params = model.params().tensors();
  std::vector<std::size_t> order(train_data.rows);
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(step, log.total_steps, config.lr_init);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Batch b = make_batch(train_data, rows, model.spec().layout);
      const double lr = cosine_lr(step, log.total_steps, config.lr_init);
      model.params().zero_grad();
      double loss = 0.0;
      {
        Tape tape;
        TapeScope scope(tape);
        ElboTerms terms;
        try {
          terms = model.elbo(b, &rng);
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                               "; last finite epoch " + std::to_string(epoch - 1));
        }
        loss = terms.loss.item();
        tape.backward(terms.loss);
      }
      adam_step(params, adam, lr, config.weight_decay);
      ++step;
      loss_sum += loss * static_cast<double>(rows.size());
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = evaluation_loss(model, val_data);
    rec.step = step;
    const bool stop = stopper.update(rec.val_loss);
    rec.patience = stopper.patience();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.early_stopping && stop) {
      log.early_stopped = true;
      break;
    }
  }
  result.rng_state = rng.state();
  result.steps = step;
  return result;
}

}  // namespace tcvae
