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

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/core/normal.hpp"

namespace tcvae {

// Maps one numerical column to an approximately standard-normal one:
// x -> empirical CDF u (piecewise linear between quantile knots) -> Φ⁻¹(u),
// clipped to ±kClip. Knots sit at evenly spaced probability levels
// r_i = i / (n - 1), n = min(kMaxKnots, N_train).
class QuantileGaussianTransform {
 public:
  static constexpr std::size_t kMaxKnots = 1000;
  static constexpr double kClip = 5.2;

  QuantileGaussianTransform() = default;
  explicit QuantileGaussianTransform(std::vector<double> quantiles)
      : quantiles_(std::move(quantiles)) {
    if (quantiles_.empty()) throw DataError("quantile transform needs at least one knot");
    if (!std::is_sorted(quantiles_.begin(), quantiles_.end())) {
      throw DataError("quantile knots are not sorted");
    }
  }

  static QuantileGaussianTransform fit(std::span<const double> values) {
    if (values.empty()) throw DataError("cannot fit a quantile transform on zero rows");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = std::min(kMaxKnots, sorted.size());
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Linear-interpolated percentile at level i / (n - 1).
      const double level = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      const double pos = level * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      q[i] = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    }
    // Interpolation may break monotonicity by one ulp; repair it.
    for (std::size_t i = 1; i < n; ++i) q[i] = std::max(q[i], q[i - 1]);
    return QuantileGaussianTransform(std::move(q));
  }

  const std::vector<double>& quantiles() const { return quantiles_; }
  double min() const { return quantiles_.front(); }
  double max() const { return quantiles_.back(); }

  // Empirical CDF level of x. A run of equal knots maps to the middle of its
  // probability range.
  double cdf(double x) const {
    const std::size_t n = quantiles_.size();
    if (n == 1) return 0.5;
    if (x < quantiles_.front()) return 0.0;
    if (x > quantiles_.back()) return 1.0;
    const auto first = std::lower_bound(quantiles_.begin(), quantiles_.end(), x);
    const auto last = std::upper_bound(quantiles_.begin(), quantiles_.end(), x);
    const auto lo = static_cast<std::size_t>(first - quantiles_.begin());
    const auto hi = static_cast<std::size_t>(last - quantiles_.begin());
    if (lo < hi) return 0.5 * (level(lo) + level(hi - 1));
    // quantiles_[lo - 1] < x < quantiles_[lo]
    const double x0 = quantiles_[lo - 1];
    const double x1 = quantiles_[lo];
    return level(lo - 1) + (x - x0) / (x1 - x0) * (level(lo) - level(lo - 1));
  }

  double forward(double x) const {
    return std::clamp(normal_quantile(cdf(x)), -kClip, kClip);
  }

  // Gaussian value back to data units; values at or beyond the clip bound map
  // to the ends of the fitted range.
  double inverse(double g) const {
    const std::size_t n = quantiles_.size();
    if (std::isnan(g)) throw NumericalError("NaN passed to inverse quantile transform");
    if (n == 1 || g <= -kClip) return quantiles_.front();
    if (g >= kClip) return quantiles_.back();
    const double pos = normal_cdf(g) * static_cast<double>(n - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), n - 2);
    const double frac = pos - static_cast<double>(lo);
    return quantiles_[lo] + frac * (quantiles_[lo + 1] - quantiles_[lo]);
  }

 private:
  double level(std::size_t i) const {
    return static_cast<double>(i) / static_cast<double>(quantiles_.size() - 1);
  }

  std::vector<double> quantiles_;
};

}  // namespace tcvae
