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

// Multinomial logistic regression with an L2 penalty, fitted by L-BFGS, and
// the grid-search-then-refit protocol used for machine-learning efficiency.
//
// Fitting is invariant to the order of the training rows: rows are put in a
// canonical (lexicographic) order before anything else, so a row-permuted
// table yields bit-identical weights and folds.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/core/kernels.hpp"
#include "tcvae/eval/statistics.hpp"

namespace tcvae {

struct LabeledRows {
  RowMatrix x;
  std::vector<std::size_t> y;

  std::size_t rows() const { return y.size(); }
};

struct LogisticConfig {
  std::vector<double> c_grid = {0.01, 0.1, 1.0};  // inverse penalty strength
  std::size_t folds = 5;
  std::size_t max_iterations = 300;
  double gradient_tolerance = 1e-7;
};

class LogisticRegression {
 public:
  LogisticRegression() = default;

  // Minimizes mean cross-entropy + ||W||² / (2 C n); biases are not penalized.
  static LogisticRegression fit(const LabeledRows& data, std::size_t classes, double c,
                                const LogisticConfig& config = {}) {
    if (data.rows() == 0) throw DataError("cannot fit a classifier on zero rows");
    if (classes == 0) throw ContractViolation("classifier needs at least one class");
    if (!(c > 0.0)) throw ContractViolation("inverse penalty strength must be positive");
    LogisticRegression m;
    m.classes_ = classes;
    m.width_ = data.x.width;
    const LabeledRows d = canonical(data);
    const std::size_t n = d.rows();
    const std::size_t dims = m.width_ + 1;
    std::vector<double> design(n * dims);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(d.x.row(r), m.width_, design.begin() + r * dims);
      design[r * dims + m.width_] = 1.0;
    }
    const double penalty = 1.0 / (c * static_cast<double>(n));
    std::vector<double> logits(n * classes);
    auto objective = [&](const std::vector<double>& w, std::vector<double>& grad) {
      kernels::gemm(n, classes, dims, design.data(), w.data(), logits.data());
      double loss = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        double* z = logits.data() + r * classes;
        const double top = *std::max_element(z, z + classes);
        double total = 0.0;
        for (std::size_t k = 0; k < classes; ++k) total += z[k] = std::exp(z[k] - top);
        loss -= std::log(z[d.y[r]] / total);
        for (std::size_t k = 0; k < classes; ++k) z[k] = z[k] / total / static_cast<double>(n);
        z[d.y[r]] -= 1.0 / static_cast<double>(n);
      }
      loss /= static_cast<double>(n);
      kernels::gemm_tn(dims, classes, n, design.data(), logits.data(), grad.data());
      for (std::size_t i = 0; i < m.width_ * classes; ++i) {
        loss += 0.5 * penalty * w[i] * w[i];
        grad[i] += penalty * w[i];
      }
      return loss;
    };
    m.weights_.assign(dims * classes, 0.0);
    minimize_lbfgs(objective, m.weights_, config);
    return m;
  }

  std::size_t predict(const double* row) const {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t k = 0; k < classes_; ++k) {
      double s = weights_[width_ * classes_ + k];
      for (std::size_t j = 0; j < width_; ++j) s += row[j] * weights_[j * classes_ + k];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    return best;
  }

  std::vector<std::size_t> predict(const RowMatrix& x) const {
    if (x.width != width_) throw DimensionError("classifier input width mismatch");
    std::vector<std::size_t> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(x.row(r));
    return out;
  }

  const std::vector<double>& weights() const { return weights_; }

  // Rows sorted lexicographically by (features, label).
  static LabeledRows canonical(const LabeledRows& data) {
    std::vector<std::size_t> order(data.rows());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t w = data.x.width;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double* ra = data.x.row(a);
      const double* rb = data.x.row(b);
      for (std::size_t j = 0; j < w; ++j) {
        if (ra[j] != rb[j]) return ra[j] < rb[j];
      }
      return data.y[a] < data.y[b];
    });
    LabeledRows out;
    out.x.width = w;
    out.x.values.reserve(data.x.values.size());
    for (std::size_t r : order) {
      out.x.values.insert(out.x.values.end(), data.x.row(r), data.x.row(r) + w);
      out.y.push_back(data.y[r]);
    }
    return out;
  }

 private:
  template <class F>
  static void minimize_lbfgs(F& f, std::vector<double>& x, const LogisticConfig& config) {
    constexpr std::size_t kMemory = 10;
    const std::size_t n = x.size();
    std::vector<double> g(n), x_new(n), g_new(n), dir(n);
    double fx = f(x, g);
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    for (std::size_t it = 0; it < config.max_iterations; ++it) {
      double gmax = 0.0;
      for (double v : g) gmax = std::max(gmax, std::abs(v));
      if (gmax < config.gradient_tolerance) break;
      // Two-loop recursion.
      dir = g;
      std::vector<double> alpha(s_hist.size());
      for (std::size_t i = s_hist.size(); i-- > 0;) {
        alpha[i] =
            rho_hist[i] * std::inner_product(s_hist[i].begin(), s_hist[i].end(), dir.begin(), 0.0);
        for (std::size_t j = 0; j < n; ++j) dir[j] -= alpha[i] * y_hist[i][j];
      }
      if (!s_hist.empty()) {
        const auto& s = s_hist.back();
        const auto& y = y_hist.back();
        const double gamma = std::inner_product(s.begin(), s.end(), y.begin(), 0.0) /
                             std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
        for (double& v : dir) v *= gamma;
      }
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        const double beta =
            rho_hist[i] * std::inner_product(y_hist[i].begin(), y_hist[i].end(), dir.begin(), 0.0);
        for (std::size_t j = 0; j < n; ++j) dir[j] += (alpha[i] - beta) * s_hist[i][j];
      }
      double slope = -std::inner_product(g.begin(), g.end(), dir.begin(), 0.0);
      if (!(slope < 0.0)) {  // not a descent direction: restart from steepest descent
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        dir = g;
        slope = -std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
      }
      // Backtracking line search on the Armijo condition along -dir.
      double step = 1.0;
      double f_new = fx;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] - step * dir[j];
        f_new = f(x_new, g_new);
        if (f_new <= fx + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      std::vector<double> s(n), y(n);
      for (std::size_t j = 0; j < n; ++j) {
        s[j] = x_new[j] - x[j];
        y[j] = g_new[j] - g[j];
      }
      const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
      x.swap(x_new);
      g.swap(g_new);
      const double change = fx - f_new;
      fx = f_new;
      if (sy > 1e-12) {
        s_hist.push_back(std::move(s));
        y_hist.push_back(std::move(y));
        rho_hist.push_back(1.0 / sy);
        if (s_hist.size() > kMemory) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
      }
      if (change <= 1e-12 * std::max(1.0, std::abs(fx))) break;
    }
  }

  std::size_t classes_ = 0;
  std::size_t width_ = 0;
  std::vector<double> weights_;  // [(width + 1) x classes]; last row holds the biases
};

inline double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw ContractViolation("accuracy needs equal, nonempty label vectors");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

struct GridSearchResult {
  LogisticRegression model;
  double best_c = 0.0;
  std::vector<double> cv_accuracy;  // per grid entry
};

// Stratified k-fold selection of C by mean accuracy (first best wins), then a
// refit on all rows. Folds deal each class's canonically ordered rows round
// robin.
inline GridSearchResult grid_search(const LabeledRows& data, std::size_t classes,
                                    const LogisticConfig& config = {}) {
  if (config.c_grid.empty()) throw ContractViolation("empty regularization grid");
  if (config.folds < 2) throw ContractViolation("cross-validation needs at least 2 folds");
  const LabeledRows d = LogisticRegression::canonical(data);
  std::vector<std::size_t> fold(d.rows());
  std::vector<std::size_t> seen(classes, 0);
  for (std::size_t r = 0; r < d.rows(); ++r) fold[r] = seen.at(d.y[r])++ % config.folds;

  GridSearchResult result;
  double best = -1.0;
  for (double c : config.c_grid) {
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < config.folds; ++k) {
      LabeledRows train, held;
      train.x.width = held.x.width = d.x.width;
      for (std::size_t r = 0; r < d.rows(); ++r) {
        LabeledRows& dst = fold[r] == k ? held : train;
        dst.x.values.insert(dst.x.values.end(), d.x.row(r), d.x.row(r) + d.x.width);
        dst.y.push_back(d.y[r]);
      }
      if (held.rows() == 0 || train.rows() == 0) continue;
      const auto m = LogisticRegression::fit(train, classes, c, config);
      total += accuracy(m.predict(held.x), held.y);
      ++used;
    }
    const double mean = used ? total / static_cast<double>(used) : 0.0;
    result.cv_accuracy.push_back(mean);
    if (mean > best) {
      best = mean;
      result.best_c = c;
    }
  }
  result.model = LogisticRegression::fit(d, classes, result.best_c, config);
  return result;
}

struct MlEfficiency {
  double utility = 0.0;        // accuracy of the synthetic-trained model on real test rows
  double fidelity = 0.0;       // agreement of the two models' test predictions
  double real_accuracy = 0.0;  // accuracy of the real-trained model
  double real_c = 0.0;
  double synth_c = 0.0;
};

inline nlohmann::json to_json(const MlEfficiency& m) {
  return {{"utility", m.utility},
          {"fidelity", m.fidelity},
          {"real_accuracy", m.real_accuracy},
          {"real_c", m.real_c},
          {"synth_c", m.synth_c}};
}

// Train on real and on synthetic rows, test both on real held-out rows.
inline MlEfficiency ml_efficiency(const LabeledRows& real_train, const LabeledRows& synth,
                                  const LabeledRows& real_test, std::size_t classes,
                                  const LogisticConfig& config = {}) {
  if (real_test.rows() == 0) throw DataError("real test split is empty");
  std::vector<bool> in_synth(classes, false);
  for (std::size_t y : synth.y) in_synth.at(y) = true;
  std::vector<bool> reported(classes, false);
  for (std::size_t y : real_test.y) {
    if (!in_synth.at(y) && !reported[y]) {
      warn("synthetic table has no rows of class index " + std::to_string(y) +
           " present in the real test split");
      reported[y] = true;
    }
  }
  const GridSearchResult real = grid_search(real_train, classes, config);
  const GridSearchResult syn = grid_search(synth, classes, config);
  const auto pred_real = real.model.predict(real_test.x);
  const auto pred_syn = syn.model.predict(real_test.x);
  MlEfficiency m;
  m.utility = accuracy(pred_syn, real_test.y);
  m.real_accuracy = accuracy(pred_real, real_test.y);
  m.fidelity = accuracy(pred_syn, pred_real);
  m.real_c = real.best_c;
  m.synth_c = syn.best_c;
  return m;
}

}  // namespace tcvae
