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

// Paired comparison of two models over many datasets: Wilcoxon signed-rank,
// Bayesian sign test with a region of practical equivalence, and average
// ranks per dataset group.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/core/normal.hpp"
#include "tcvae/core/random.hpp"

namespace tcvae {

// 1-based ranks with ties sharing their mean rank.
inline std::vector<double> mean_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline constexpr std::size_t kWilcoxonExactLimit = 25;

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // rank sum of positive differences a − b
  std::size_t n = 0;    // nonzero differences
  bool exact = true;
};

// Two-sided signed-rank test of a − b. Zero differences are dropped. The null
// distribution is enumerated exactly (ties keep their mean ranks) for up to
// 25 nonzero differences and normal with tie correction above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("paired samples differ in length");
  if (a.size() < 5) throw ContractViolation("signed-rank test needs at least 5 pairs");
  std::vector<double> diff, magnitude;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) {
      diff.push_back(d);
      magnitude.push_back(std::abs(d));
    }
  }
  WilcoxonResult r;
  r.n = diff.size();
  if (r.n == 0) return r;
  const std::vector<double> ranks = mean_ranks(magnitude);
  for (std::size_t i = 0; i < r.n; ++i) {
    if (diff[i] > 0.0) r.w_plus += ranks[i];
  }
  if (r.n <= kWilcoxonExactLimit) {
    // Doubled ranks are integers; count sign patterns by doubled W+.
    std::vector<int> doubled;
    int total = 0;
    for (double rank : ranks) {
      doubled.push_back(static_cast<int>(std::lround(2.0 * rank)));
      total += doubled.back();
    }
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int v : doubled) {
      for (int s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + v)] += count[s];
      reach += v;
    }
    const double patterns = std::ldexp(1.0, static_cast<int>(r.n));
    const auto w = static_cast<std::size_t>(std::lround(2.0 * r.w_plus));
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s < count.size(); ++s) {
      if (s <= w) lower += count[s];
      if (s >= w) upper += count[s];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
    r.exact = true;
  } else {
    const double n = static_cast<double>(r.n);
    const double mean = n * (n + 1.0) / 4.0;
    double ties = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      ties += t * t * t - t;
      i = j;
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    const double z = (r.w_plus - mean) / std::sqrt(var);
    r.p_value = std::min(1.0, 2.0 * normal_cdf(-std::abs(z)));
    r.exact = false;
  }
  return r;
}

inline constexpr double kRope = 0.03;

struct BayesSignResult {
  double p_a_better = 0.0;
  double p_equivalent = 0.0;
  double p_b_better = 0.0;
  std::size_t left = 0, rope = 0, right = 0;  // counts of a − b below, within, above the ROPE
};

// Marsaglia-Tsang draw from Gamma(shape, 1) for shape >= 1.
inline double gamma_draw(Rng& rng, double shape) {
  if (!(shape >= 1.0)) throw ContractViolation("gamma draw requires shape >= 1");
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    const double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

// Posterior Dirichlet(counts + 1) over (a − b < −rope, |a − b| <= rope,
// a − b > rope); each probability is the Monte Carlo frequency with which
// that component is the largest.
inline BayesSignResult bayes_sign_test(std::span<const double> a, std::span<const double> b,
                                       double rope = kRope, std::size_t draws = 50000,
                                       std::uint64_t seed = 0) {
  if (a.size() != b.size()) throw ContractViolation("paired samples differ in length");
  if (draws == 0) throw ContractViolation("Bayes sign test needs at least one draw");
  BayesSignResult r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d < -rope) {
      ++r.left;
    } else if (d > rope) {
      ++r.right;
    } else {
      ++r.rope;
    }
  }
  Rng rng(mix_seed(seed, 0xba7e5));
  std::size_t wins[3] = {0, 0, 0};
  const double shape[3] = {r.left + 1.0, r.rope + 1.0, r.right + 1.0};
  for (std::size_t k = 0; k < draws; ++k) {
    double g[3];
    for (int j = 0; j < 3; ++j) g[j] = gamma_draw(rng, shape[j]);
    // Normalization does not change which component is largest.
    ++wins[std::max_element(g, g + 3) - g];
  }
  const double n = static_cast<double>(draws);
  r.p_b_better = static_cast<double>(wins[0]) / n;
  r.p_equivalent = static_cast<double>(wins[1]) / n;
  r.p_a_better = static_cast<double>(wins[2]) / n;
  return r;
}

inline nlohmann::json to_json(const WilcoxonResult& w) {
  return {{"p_value", w.p_value}, {"w_plus", w.w_plus}, {"n", w.n}, {"exact", w.exact}};
}

inline nlohmann::json to_json(const BayesSignResult& b) {
  return {{"p_a_better", b.p_a_better},
          {"p_equivalent", b.p_equivalent},
          {"p_b_better", b.p_b_better},
          {"counts", {{"left", b.left}, {"rope", b.rope}, {"right", b.right}}}};
}

struct DatasetScores {
  std::string group;
  std::vector<double> scores;  // one per model; higher is better
};

// Per group, each model's rank averaged over the group's datasets (1 = best,
// ties share the mean rank). Groups without datasets do not appear.
inline std::map<std::string, std::vector<double>> rank_by_group(
    std::span<const DatasetScores> datasets) {
  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, std::size_t> counts;
  std::size_t models = 0;
  for (const DatasetScores& d : datasets) {
    if (models == 0) models = d.scores.size();
    if (d.scores.size() != models || models < 2) {
      throw ContractViolation("every dataset needs a score for each of at least 2 models");
    }
    std::vector<double> negated;
    for (double s : d.scores) negated.push_back(-s);
    const std::vector<double> ranks = mean_ranks(negated);
    auto& acc = sums[d.group];
    acc.resize(models, 0.0);
    for (std::size_t m = 0; m < models; ++m) acc[m] += ranks[m];
    ++counts[d.group];
  }
  for (auto& [group, acc] : sums) {
    for (double& v : acc) v /= static_cast<double>(counts[group]);
  }
  return sums;
}

// Label of the bin [edges[i-1], edges[i]) holding `value`, e.g. "<1000",
// "1000-5000", ">=5000" for edges {1000, 5000}.
inline std::string size_bin(double value, std::span<const double> edges) {
  const auto fmt = [](double v) { return std::to_string(static_cast<long long>(v)); };
  if (edges.empty() || value < edges.front()) {
    return edges.empty() ? "all" : "<" + fmt(edges.front());
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (value < edges[i]) return fmt(edges[i - 1]) + "-" + fmt(edges[i]);
  }
  return ">=" + fmt(edges.back());
}

}  // namespace tcvae
