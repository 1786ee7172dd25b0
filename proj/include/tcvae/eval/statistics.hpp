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

// Distribution-level similarity between a real and a synthetic table:
// per-column marginals, pairwise dependence, and support coverage.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/data/table.hpp"

namespace tcvae {

struct ColumnScore {
  std::string name;
  double score = 0.0;
};

struct PairScore {
  std::string first;
  std::string second;
  double score = 0.0;
};

struct MarginalReport {
  double score = 0.0;  // mean over columns
  std::vector<ColumnScore> columns;
};

struct CorrelationReport {
  double score = 0.0;  // mean over scored pairs
  std::vector<PairScore> pairs;
  std::vector<std::string> skipped;  // "a|b" for pairs without a defined score
};

namespace detail {

inline std::vector<double> present(const std::vector<double>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v) {
    if (!std::isnan(x)) out.push_back(x);
  }
  return out;
}

inline const Column& matching_column(const Table& synth, const Column& real) {
  const Column& c = synth.column(real.name);
  if (c.numerical() != real.numerical()) {
    throw DataError("column '" + real.name + "' has a different kind in the synthetic table");
  }
  return c;
}

inline void require_rows(const Table& t, const char* what) {
  if (t.columns.empty() || t.rows() == 0) throw DataError(std::string(what) + " table is empty");
}

}  // namespace detail

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DataError("KS statistic needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// ½ Σ_c |p_a(c) − p_b(c)| over the union of labels; "" cells are skipped.
inline double total_variation(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  std::map<std::string, std::pair<double, double>> freq;
  double na = 0.0, nb = 0.0;
  for (const std::string& s : a) {
    if (s.empty()) continue;
    freq[s].first += 1.0;
    na += 1.0;
  }
  for (const std::string& s : b) {
    if (s.empty()) continue;
    freq[s].second += 1.0;
    nb += 1.0;
  }
  if (na == 0.0 || nb == 0.0) throw DataError("total variation needs two nonempty samples");
  double tvd = 0.0;
  for (const auto& [label, f] : freq) tvd += std::abs(f.first / na - f.second / nb);
  return 0.5 * tvd;
}

// 1 − KS for numerical columns and 1 − TVD for categorical and target
// columns, averaged over the real table's columns.
inline MarginalReport one_way_marginals(const Table& real, const Table& synth) {
  detail::require_rows(real, "real");
  detail::require_rows(synth, "synthetic");
  MarginalReport r;
  for (const Column& rc : real.columns) {
    const Column& sc = detail::matching_column(synth, rc);
    const double s = rc.numerical() ? 1.0 - ks_statistic(detail::present(rc.numbers),
                                                         detail::present(sc.numbers))
                                    : 1.0 - total_variation(rc.labels, sc.labels);
    r.columns.push_back({rc.name, s});
    r.score += s;
  }
  r.score /= static_cast<double>(r.columns.size());
  return r;
}

// Pearson correlation, or NaN when either column is constant.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return NAN;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Agreement of a real and a synthetic correlation: 1 − |ρ − ρ̃| / 2.
inline double correlation_pair_score(double rho, double rho_synth) {
  return 1.0 - std::abs(rho - rho_synth) / 2.0;
}

// Interior edges of `bins` equal-frequency bins of the non-missing values
// (linear interpolation between order statistics).
inline std::vector<double> equal_frequency_edges(std::vector<double> values, std::size_t bins) {
  values = detail::present(values);
  if (values.empty()) throw DataError("cannot bin an empty column");
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < bins; ++k) {
    const double h =
        static_cast<double>(values.size() - 1) * static_cast<double>(k) / static_cast<double>(bins);
    const auto lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    edges.push_back(values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]));
  }
  return edges;
}

inline std::vector<std::string> discretize(const std::vector<double>& values,
                                           const std::vector<double>& edges) {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (double v : values) {
    if (std::isnan(v)) {
      out.emplace_back();
    } else {
      out.push_back(
          std::to_string(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin()));
    }
  }
  return out;
}

// 1 − ½ Σ_{a,b} |f_real(a,b) − f_synth(a,b)| over joint label frequencies.
inline double contingency_similarity(const std::vector<std::string>& ra,
                                     const std::vector<std::string>& rb,
                                     const std::vector<std::string>& sa,
                                     const std::vector<std::string>& sb) {
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> freq;
  double nr = 0.0, ns = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].empty() || rb[i].empty()) continue;
    freq[{ra[i], rb[i]}].first += 1.0;
    nr += 1.0;
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].empty() || sb[i].empty()) continue;
    freq[{sa[i], sb[i]}].second += 1.0;
    ns += 1.0;
  }
  if (nr == 0.0 || ns == 0.0) throw DataError("contingency table is empty");
  double d = 0.0;
  for (const auto& [cell, f] : freq) d += std::abs(f.first / nr - f.second / ns);
  return 1.0 - 0.5 * d;
}

inline constexpr std::size_t kCorrelationBins = 10;

// Every unordered column pair: numerical pairs score 1 − |ρ_real − ρ_synth|/2,
// categorical pairs score contingency similarity, and mixed pairs bin the
// numerical column into equal-frequency bins of the real column first.
// Pairs with a constant numerical column are skipped with a warning.
inline CorrelationReport pairwise_correlation(const Table& real, const Table& synth) {
  detail::require_rows(real, "real");
  detail::require_rows(synth, "synthetic");
  if (real.columns.size() < 2) throw DataError("pairwise correlation needs at least 2 columns");
  std::vector<const Column*> sc;
  std::vector<std::vector<std::string>> real_labels, synth_labels;
  for (const Column& rc : real.columns) {
    const Column& s = detail::matching_column(synth, rc);
    sc.push_back(&s);
    if (rc.numerical()) {
      const auto edges = equal_frequency_edges(rc.numbers, kCorrelationBins);
      real_labels.push_back(discretize(rc.numbers, edges));
      synth_labels.push_back(discretize(s.numbers, edges));
    } else {
      real_labels.push_back(rc.labels);
      synth_labels.push_back(s.labels);
    }
  }
  CorrelationReport r;
  for (std::size_t i = 0; i < real.columns.size(); ++i) {
    for (std::size_t j = i + 1; j < real.columns.size(); ++j) {
      const Column& a = real.columns[i];
      const Column& b = real.columns[j];
      double score = 0.0;
      if (a.numerical() && b.numerical()) {
        const double rho = pearson(a.numbers, b.numbers);
        const double rho_s = pearson(sc[i]->numbers, sc[j]->numbers);
        if (std::isnan(rho) || std::isnan(rho_s)) {
          warn("pair (" + a.name + ", " + b.name +
               ") skipped: Pearson correlation is undefined for a constant column");
          r.skipped.push_back(a.name + "|" + b.name);
          continue;
        }
        score = correlation_pair_score(rho, rho_s);
      } else {
        score = contingency_similarity(real_labels[i], real_labels[j], synth_labels[i],
                                       synth_labels[j]);
      }
      r.pairs.push_back({a.name, b.name, score});
      r.score += score;
    }
  }
  if (r.pairs.empty()) throw DataError("no column pair has a defined correlation score");
  r.score /= static_cast<double>(r.pairs.size());
  return r;
}

// ---------------------------------------------------------------------------
// Support coverage

// Rows of a dense [count x width] matrix.
struct RowMatrix {
  std::size_t width = 0;
  std::vector<double> values;

  std::size_t rows() const { return width == 0 ? 0 : values.size() / width; }
  const double* row(std::size_t r) const { return values.data() + r * width; }
};

struct SupportCurve {
  std::vector<double> levels;     // 0.05, 0.10, ..., 0.95
  std::vector<double> inclusion;  // fraction of probe rows inside each level's ball
};

struct SupportScore {
  double score = 0.0;  // 1 − 2 · mean_k |inclusion_k − level_k|
  SupportCurve curve;
};

inline std::vector<double> support_levels() {
  std::vector<double> levels;
  for (int k = 1; k <= 19; ++k) levels.push_back(0.05 * k);
  return levels;
}

// Order statistic interpolation on sorted values.
inline double sorted_quantile(const std::vector<double>& sorted, double level) {
  const double h = static_cast<double>(sorted.size() - 1) * level;
  const auto lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline constexpr std::size_t kMinSupportRows = 10;

// Balls around the mean of `reference` whose radii are the level-quantiles of
// the reference rows' distances to that mean; inclusion is the fraction of
// `probe` rows within each radius.
inline SupportScore support_coverage(const RowMatrix& reference, const RowMatrix& probe,
                                     std::vector<double> levels = support_levels()) {
  if (reference.width != probe.width) {
    throw DimensionError("support coverage: row widths " + std::to_string(reference.width) +
                         " and " + std::to_string(probe.width) + " differ");
  }
  if (reference.rows() < kMinSupportRows || probe.rows() < kMinSupportRows) {
    throw DataError("support coverage needs at least 10 rows in each table");
  }
  const std::size_t w = reference.width;
  std::vector<double> center(w, 0.0);
  for (std::size_t r = 0; r < reference.rows(); ++r) {
    for (std::size_t c = 0; c < w; ++c) center[c] += reference.row(r)[c];
  }
  for (double& c : center) c /= static_cast<double>(reference.rows());
  const auto distances = [&](const RowMatrix& m) {
    std::vector<double> d(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < w; ++c) {
        const double e = m.row(r)[c] - center[c];
        s += e * e;
      }
      d[r] = std::sqrt(s);
    }
    std::sort(d.begin(), d.end());
    return d;
  };
  const std::vector<double> ref = distances(reference);
  const std::vector<double> pro = distances(probe);
  SupportScore s;
  double dev = 0.0;
  for (double level : levels) {
    const double radius = sorted_quantile(ref, level);
    const auto inside = std::upper_bound(pro.begin(), pro.end(), radius) - pro.begin();
    const double frac = static_cast<double>(inside) / static_cast<double>(pro.size());
    s.curve.levels.push_back(level);
    s.curve.inclusion.push_back(frac);
    dev += std::abs(frac - level);
  }
  s.score = 1.0 - 2.0 * dev / static_cast<double>(levels.size());
  return s;
}

// Fraction of synthetic rows inside the real support, per level.
inline SupportScore alpha_precision(const RowMatrix& real, const RowMatrix& synth) {
  return support_coverage(real, synth);
}

// Fraction of real rows inside the synthetic support, per level.
inline SupportScore beta_recall(const RowMatrix& real, const RowMatrix& synth) {
  return support_coverage(synth, real);
}

}  // namespace tcvae
