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

// Adam with decoupled weight decay, cosine learning-rate decay, the batch
// size rule and early stopping.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/tensor.hpp"

namespace tcvae {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// θ ← θ − lr·wd·θ, then θ ← θ − lr·m̂/(√v̂ + ε) with bias-corrected moments.
inline void adam_step(std::vector<Tensor>& params, AdamState& state, double lr,
                      double weight_decay) {
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractViolation("optimizer state does not match the parameter list");
  }
  ++state.t;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    auto theta = param.mutable_data();
    const bool has_grad = param.has_grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != theta.size()) throw ContractViolation("moment shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? param.grad()[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] = theta[i] * decay - lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

// lr_init · ½ (1 + cos(π · step / total_steps)).
inline double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr_init) {
  if (total_steps == 0) return lr_init;
  if (step > total_steps) throw ContractViolation("step beyond the schedule horizon");
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_init * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// 2^clamp(floor(log2(N_val / 4)), 5, 10).
inline std::size_t pick_batch_size(std::size_t n_val) {
  if (n_val == 0) throw ContractViolation("validation split is empty");
  const double quarter = static_cast<double>(n_val) / 4.0;
  const int exponent = std::clamp(static_cast<int>(std::floor(std::log2(quarter))), 5, 10);
  return std::size_t{1} << exponent;
}

// Counts validation epochs that fail to improve on the reference loss by at
// least min_delta; stops when the count reaches the limit. The reference is
// the previous epoch's loss by default, or the best loss so far. The count
// never resets.
class EarlyStopper {
 public:
  enum class Reference { kPrevious, kBest };

  explicit EarlyStopper(std::size_t patience_limit = 25, double min_delta = 1e-3,
                        Reference reference = Reference::kPrevious)
      : limit_(patience_limit), min_delta_(min_delta), reference_(reference) {
    if (patience_limit == 0) throw ContractViolation("patience limit must be at least 1");
  }

  // Returns true when training should stop after this epoch.
  bool update(double val_loss) {
    if (previous_) {
      const double ref = reference_ == Reference::kBest ? best_ : *previous_;
      if (!(ref - val_loss >= min_delta_)) ++patience_;
    }
    if (!previous_ || val_loss < best_) best_ = val_loss;
    previous_ = val_loss;
    return stopped();
  }

  bool stopped() const { return patience_ >= limit_; }
  std::size_t patience() const { return patience_; }
  double best() const { return best_; }

  static Reference parse_reference(const std::string& s) {
    if (s == "previous") return Reference::kPrevious;
    if (s == "best") return Reference::kBest;
    throw ContractViolation("early-stopping reference must be 'previous' or 'best'");
  }

 private:
  std::size_t limit_;
  double min_delta_;
  Reference reference_;
  std::size_t patience_ = 0;
  double best_ = 0.0;
  std::optional<double> previous_;
};

}  // namespace tcvae
