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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/random.hpp"
#include "tcvae/core/tensor.hpp"

namespace tcvae {

enum class Init { kZeros, kOnes, kUniformFanIn };

// Named learnable tensors in creation order. Layers keep handles to the
// tensors they create, so replacing values in place (optimizer steps,
// checkpoint loads) is visible to every layer.
class ParamStore {
 public:
  // kUniformFanIn draws U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor create(const std::string& name, Shape shape, Init init, Rng& rng,
                std::size_t fan_in = 0) {
    if (index_.count(name)) throw ContractViolation("duplicate parameter '" + name + "'");
    std::vector<double> v(shape.numel(), init == Init::kOnes ? 1.0 : 0.0);
    if (init == Init::kUniformFanIn) {
      if (fan_in == 0) throw ContractViolation("fan_in required for '" + name + "'");
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : v) x = bound * (2.0 * rng.uniform() - 1.0);
    }
    Tensor t(shape, std::move(v), /*requires_grad=*/true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : entries_) out.push_back(t);
    return out;
  }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("no parameter '" + name + "'");
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return entries_.size(); }

  // Total number of learnable scalars.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace tcvae
