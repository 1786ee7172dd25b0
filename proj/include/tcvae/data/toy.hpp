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

// Two-dimensional toy datasets: points drawn uniformly on [-3r, 3r]^2 and
// labelled by a hand-made decision boundary.
//
//   circles  ring index of x1^2 + x2^2 against r^2, (2r)^2, (3r)^2
//   sin      1 if x2 > A sin(2 pi x1 / width), A = height / 4, else 0
//   blobs    quadrant index: 2 * [x2 > 0] + [x1 > 0]
//   xor      [x1 > 0] xor [x2 > 0]

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/random.hpp"
#include "tcvae/data/table.hpp"

namespace tcvae {

inline const std::vector<std::string>& toy_names() {
  static const std::vector<std::string> names = {"circles", "sin", "blobs", "xor"};
  return names;
}

inline int circles_class(double x, double y, double r) {
  const double s = x * x + y * y;
  const double r2 = r * r;
  if (s < r2) return 0;
  if (s <= 4.0 * r2) return 1;
  if (s <= 9.0 * r2) return 2;
  return 3;
}

inline int sin_class(double x, double y, double x_min, double x_max, double y_min,
                     double y_max) {
  const double amplitude = (y_max - y_min) / 4.0;
  return y > std::sin(2.0 * std::numbers::pi * x / (x_max - x_min)) * amplitude ? 1 : 0;
}

inline int blobs_class(double x, double y) { return 2 * (y > 0.0) + (x > 0.0); }

inline int xor_class(double x, double y) { return (x > 0.0) != (y > 0.0) ? 1 : 0; }

// Columns "x1", "x2" (numerical) and "class" (target, labels "0".."3").
inline Table toy_generate(std::string_view name, std::size_t n, std::uint64_t seed,
                          double radius = 1.0) {
  if (n < 1) throw DataError("toy dataset needs at least one row");
  if (!(radius > 0.0)) throw DataError("toy radius must be positive");
  const double lo = -3.0 * radius;
  const double hi = 3.0 * radius;
  int shape = -1;
  for (std::size_t i = 0; i < toy_names().size(); ++i) {
    if (toy_names()[i] == name) shape = static_cast<int>(i);
  }
  if (shape < 0) throw DataError("unknown toy dataset '" + std::string(name) + "'");

  Rng rng(mix_seed(seed, 0x70f));
  Column x1{"x1", ColumnKind::kNumerical, {}, {}};
  Column x2{"x2", ColumnKind::kNumerical, {}, {}};
  Column label{"class", ColumnKind::kTarget, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * rng.uniform();
    const double y = lo + (hi - lo) * rng.uniform();
    int c = 0;
    switch (shape) {
      case 0: c = circles_class(x, y, radius); break;
      case 1: c = sin_class(x, y, lo, hi, lo, hi); break;
      case 2: c = blobs_class(x, y); break;
      default: c = xor_class(x, y);
    }
    x1.numbers.push_back(x);
    x2.numbers.push_back(y);
    label.labels.push_back(std::to_string(c));
  }
  Table t;
  t.columns = {std::move(x1), std::move(x2), std::move(label)};
  return t;
}

}  // namespace tcvae
