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
#include <numeric>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "tcvae/data/toy.hpp"
#include "tcvae/eval/classifier.hpp"
#include "tcvae/eval/compare.hpp"
#include "tcvae/eval/embedding.hpp"
#include "tcvae/eval/report.hpp"
#include "tcvae/eval/statistics.hpp"

namespace tcvae {
namespace {

std::vector<std::string> g_warnings;
void capture_warning(const std::string& m) { g_warnings.push_back(m); }

class WarningCapture {
 public:
  WarningCapture() {
    g_warnings.clear();
    warning_sink() = capture_warning;
  }
  ~WarningCapture() { warning_sink() = nullptr; }
};

Column numeric(std::string name, std::vector<double> v) {
  return {std::move(name), ColumnKind::kNumerical, std::move(v), {}};
}

Column labels(std::string name, std::vector<std::string> v,
              ColumnKind kind = ColumnKind::kCategorical) {
  return {std::move(name), kind, {}, std::move(v)};
}

Table permuted(const Table& t, std::uint64_t seed) {
  std::vector<std::size_t> order(t.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  return t.select_rows(order);
}

// Mixed table: two correlated numerics, a categorical tied to the first, a target.
Table mixed_table(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a, b;
  std::vector<std::string> c, y;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    a.push_back(x);
    b.push_back(0.6 * x + 0.8 * rng.normal());
    c.push_back(x > 0.5 ? "hi" : (rng.uniform() < 0.5 ? "lo" : "mid"));
    y.push_back(x + rng.normal() > 0 ? "p" : "n");
  }
  Table t;
  t.columns = {numeric("a", a), numeric("b", b), labels("c", c),
               labels("y", y, ColumnKind::kTarget)};
  return t;
}

// ---------------------------------------------------------------------------
// Marginals

TEST(MarginalTest, Examples) {
  Rng rng(1);
  std::vector<double> u(200);
  for (double& v : u) v = rng.uniform();
  std::vector<double> shifted = u;
  for (double& v : shifted) v += 10.0;
  EXPECT_EQ(ks_statistic(u, u), 0.0);
  EXPECT_EQ(ks_statistic(u, shifted), 1.0);
  EXPECT_EQ(total_variation({"A", "A"}, {"B", "B", "B"}), 1.0);
  EXPECT_EQ(total_variation({"A", "B"}, {"B", "A"}), 0.0);

  Table real, synth;
  real.columns = {numeric("x", u), labels("k", std::vector<std::string>(200, "A"))};
  synth.columns = {numeric("x", shifted), labels("k", std::vector<std::string>(200, "B"))};
  const MarginalReport r = one_way_marginals(real, synth);
  EXPECT_EQ(r.score, 0.0);
  EXPECT_EQ(one_way_marginals(real, real).score, 1.0);
}

TEST(MarginalTest, KsMatchesBruteForceSupremum) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(30), b(45);
    for (double& v : a) v = std::round(rng.normal() * 4.0) / 4.0;  // ties
    for (double& v : b) v = std::round((rng.normal() + 0.3) * 4.0) / 4.0;
    double brute = 0.0;
    std::vector<double> points = a;
    points.insert(points.end(), b.begin(), b.end());
    for (double x : points) {
      const double fa =
          static_cast<double>(std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; })) /
          30.0;
      const double fb =
          static_cast<double>(std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; })) /
          45.0;
      brute = std::max(brute, std::abs(fa - fb));
    }
    EXPECT_NEAR(ks_statistic(a, b), brute, 1e-15);
  }
}

TEST(MarginalTest, RowPermutationScoresOne) {
  const Table t = mixed_table(500, 3);
  const MarginalReport r = one_way_marginals(t, permuted(t, 4));
  EXPECT_EQ(r.score, 1.0);
  EXPECT_EQ(r.columns.size(), 4u);
}

TEST(MarginalTest, RejectsEmptyOrMismatchedTables) {
  const Table t = mixed_table(20, 3);
  EXPECT_THROW(one_way_marginals(t, Table{}), DataError);
  Table wrong = t;
  wrong.columns[0] = labels("a", std::vector<std::string>(20, "x"));
  EXPECT_THROW(one_way_marginals(t, wrong), DataError);
}

// ---------------------------------------------------------------------------
// Pairwise correlation

TEST(CorrelationTest, PairScoreExamples) {
  EXPECT_DOUBLE_EQ(correlation_pair_score(0.5, 0.1), 0.8);
  EXPECT_EQ(correlation_pair_score(1.0, -1.0), 0.0);
  EXPECT_EQ(correlation_pair_score(0.3, 0.3), 1.0);
}

TEST(CorrelationTest, RowPermutationScoresOne) {
  const Table t = mixed_table(800, 5);
  const CorrelationReport r = pairwise_correlation(t, permuted(t, 6));
  EXPECT_EQ(r.pairs.size(), 6u);
  EXPECT_NEAR(r.score, 1.0, 1e-12);
  for (const PairScore& p : r.pairs) EXPECT_NEAR(p.score, 1.0, 1e-12) << p.first << p.second;
}

TEST(CorrelationTest, NumericalPairUsesPearson) {
  Rng rng(7);
  std::vector<double> x(400), y(400), ys(400);
  for (std::size_t i = 0; i < 400; ++i) {
    x[i] = rng.normal();
    y[i] = x[i] + rng.normal();
    ys[i] = -x[i] + 0.2 * rng.normal();
  }
  Table real, synth;
  real.columns = {numeric("x", x), numeric("y", y)};
  synth.columns = {numeric("x", x), numeric("y", ys)};
  // Independent oracle: textbook Pearson from raw sums.
  const auto rho = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sa += a[i];
      sb += b[i];
      saa += a[i] * a[i];
      sbb += b[i] * b[i];
      sab += a[i] * b[i];
    }
    return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  };
  const double expected = 1.0 - std::abs(rho(x, y) - rho(x, ys)) / 2.0;
  EXPECT_NEAR(pairwise_correlation(real, synth).score, expected, 1e-12);
}

TEST(CorrelationTest, CategoricalPairMatchesBruteForceContingency) {
  Rng rng(8);
  std::vector<std::string> a, b, sa, sb;
  const std::vector<std::string> cats = {"u", "v", "w"};
  for (int i = 0; i < 300; ++i) {
    a.push_back(cats[rng.below(3)]);
    b.push_back(cats[rng.below(2)]);
    sa.push_back(cats[rng.below(3)]);
    sb.push_back(cats[rng.below(3)]);
  }
  double d = 0.0;
  for (const auto& p : cats) {
    for (const auto& q : cats) {
      double fr = 0, fs = 0;
      for (int i = 0; i < 300; ++i) {
        fr += a[i] == p && b[i] == q;
        fs += sa[i] == p && sb[i] == q;
      }
      d += std::abs(fr / 300.0 - fs / 300.0);
    }
  }
  Table real, synth;
  real.columns = {labels("a", a), labels("b", b)};
  synth.columns = {labels("a", sa), labels("b", sb)};
  EXPECT_NEAR(pairwise_correlation(real, synth).score, 1.0 - 0.5 * d, 1e-12);
}

TEST(CorrelationTest, MixedPairBinsOnRealDeciles) {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 0.0);
  const auto edges = equal_frequency_edges(x, 10);
  ASSERT_EQ(edges.size(), 9u);
  EXPECT_DOUBLE_EQ(edges[0], 9.9);
  EXPECT_DOUBLE_EQ(edges[8], 89.1);
  const auto bins = discretize({-5.0, 9.0, 10.0, 500.0}, edges);
  EXPECT_EQ(bins, (std::vector<std::string>{"0", "0", "1", "9"}));
}

TEST(CorrelationTest, ConstantNumericalPairIsSkippedWithWarning) {
  WarningCapture capture;
  Table real, synth;
  real.columns = {numeric("x", {1, 2, 3, 4}), numeric("k", {5, 5, 5, 5}),
                  labels("c", {"a", "b", "a", "b"})};
  synth = real;
  const CorrelationReport r = pairwise_correlation(real, synth);
  EXPECT_EQ(r.skipped, std::vector<std::string>{"x|k"});
  EXPECT_EQ(r.pairs.size(), 2u);
  EXPECT_FALSE(g_warnings.empty());
}

// ---------------------------------------------------------------------------
// Support coverage

RowMatrix gaussian_rows(std::size_t n, std::size_t w, Rng& rng, double shift = 0.0) {
  RowMatrix m;
  m.width = w;
  for (std::size_t i = 0; i < n * w; ++i) m.values.push_back(rng.normal() + shift);
  return m;
}

// Independent oracle: sorts by brute force per level without shared helpers.
double brute_support(const RowMatrix& ref, const RowMatrix& probe) {
  const std::size_t w = ref.width;
  std::vector<double> center(w, 0.0);
  for (std::size_t r = 0; r < ref.rows(); ++r) {
    for (std::size_t c = 0; c < w; ++c) center[c] += ref.values[r * w + c] / ref.rows();
  }
  auto dist = [&](const RowMatrix& m, std::size_t r) {
    double s = 0;
    for (std::size_t c = 0; c < w; ++c) s += std::pow(m.values[r * w + c] - center[c], 2);
    return std::sqrt(s);
  };
  std::vector<double> rd;
  for (std::size_t r = 0; r < ref.rows(); ++r) rd.push_back(dist(ref, r));
  std::sort(rd.begin(), rd.end());
  double dev = 0.0;
  for (int k = 1; k <= 19; ++k) {
    const double level = k / 20.0;
    const double h = (rd.size() - 1) * level;
    const double radius =
        rd[std::floor(h)] + (h - std::floor(h)) * (rd[std::ceil(h)] - rd[std::floor(h)]);
    double inside = 0;
    for (std::size_t r = 0; r < probe.rows(); ++r) inside += dist(probe, r) <= radius;
    dev += std::abs(inside / probe.rows() - level);
  }
  return 1.0 - 2.0 * dev / 19.0;
}

TEST(SupportTest, IdenticalTablesScoreNearOne) {
  Rng rng(9);
  const RowMatrix real = gaussian_rows(5000, 4, rng);
  EXPECT_GE(alpha_precision(real, real).score, 0.98);
  EXPECT_GE(beta_recall(real, real).score, 0.98);
}

TEST(SupportTest, CollapsedAndDistantSyntheticRowsScoreZero) {
  Rng rng(10);
  const RowMatrix real = gaussian_rows(400, 3, rng);
  RowMatrix at_center;
  at_center.width = 3;
  std::vector<double> center(3, 0.0);
  for (std::size_t r = 0; r < real.rows(); ++r) {
    for (int c = 0; c < 3; ++c) center[c] += real.row(r)[c] / 400.0;
  }
  for (int r = 0; r < 50; ++r)
    at_center.values.insert(at_center.values.end(), center.begin(), center.end());
  const SupportScore inside = alpha_precision(real, at_center);
  for (double p : inside.curve.inclusion) EXPECT_EQ(p, 1.0);
  EXPECT_NEAR(inside.score, 0.0, 1e-12);

  RowMatrix far;
  far.width = 3;
  far.values.assign(150, 1e3);
  EXPECT_NEAR(alpha_precision(real, far).score, 0.0, 1e-12);
  EXPECT_NEAR(beta_recall(real, far).score, 0.0, 1e-12);  // every real row far from the point
}

TEST(SupportTest, MatchesBruteForceAndOutliersLandBetweenExtremes) {
  Rng rng(11);
  const RowMatrix real = gaussian_rows(300, 2, rng);
  RowMatrix synth = gaussian_rows(300, 2, rng);
  for (int i = 0; i < 150; ++i) {
    synth.values.push_back(40.0 + rng.normal());
    synth.values.push_back(-40.0 + rng.normal());
  }
  const double precision = alpha_precision(real, synth).score;
  const double recall = beta_recall(real, synth).score;
  EXPECT_NEAR(precision, brute_support(real, synth), 1e-12);
  EXPECT_NEAR(recall, brute_support(synth, real), 1e-12);
  EXPECT_GT(recall, 0.0);
  EXPECT_LT(recall, 1.0);
  EXPECT_GT(precision, 0.0);
  EXPECT_LT(precision, 1.0);
}

TEST(SupportTest, CurveIsMonotoneAndInUnitInterval) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const RowMatrix a = gaussian_rows(50 + trial, 3, rng, 0.0);
    const RowMatrix b = gaussian_rows(70, 3, rng, 0.1 * trial);
    for (const SupportScore& s : {alpha_precision(a, b), beta_recall(a, b)}) {
      EXPECT_GE(s.score, 0.0);
      EXPECT_LE(s.score, 1.0);
      for (std::size_t k = 0; k < s.curve.inclusion.size(); ++k) {
        EXPECT_GE(s.curve.inclusion[k], 0.0);
        EXPECT_LE(s.curve.inclusion[k], 1.0);
        if (k > 0) EXPECT_GE(s.curve.inclusion[k], s.curve.inclusion[k - 1]);
      }
    }
  }
}

TEST(SupportTest, InvariantToCommonAffineRescaling) {
  Rng rng(13);
  const RowMatrix real = gaussian_rows(300, 3, rng);
  const RowMatrix synth = gaussian_rows(250, 3, rng, 0.4);
  auto rescale = [](RowMatrix m) {
    for (double& v : m.values) v = 2.5 * v + 1.25;
    return m;
  };
  EXPECT_NEAR(alpha_precision(rescale(real), rescale(synth)).score,
              alpha_precision(real, synth).score, 1e-12);
  EXPECT_NEAR(beta_recall(rescale(real), rescale(synth)).score, beta_recall(real, synth).score,
              1e-12);
}

TEST(SupportTest, TooFewRowsIsAnError) {
  Rng rng(14);
  EXPECT_THROW(alpha_precision(gaussian_rows(9, 2, rng), gaussian_rows(50, 2, rng)), DataError);
  EXPECT_THROW(beta_recall(gaussian_rows(50, 2, rng), gaussian_rows(9, 2, rng)), DataError);
}

// ---------------------------------------------------------------------------
// Classifier and ML efficiency

LabeledRows blobs(std::size_t n, Rng& rng, double noise) {
  LabeledRows d;
  d.x.width = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = rng.below(3);
    d.x.values.push_back(std::cos(2.1 * y) * 2 + noise * rng.normal());
    d.x.values.push_back(std::sin(2.1 * y) * 2 + noise * rng.normal());
    d.y.push_back(y);
  }
  return d;
}

TEST(ClassifierTest, ReachesStationaryPointOfPenalizedObjective) {
  Rng rng(15);
  const LabeledRows d = blobs(150, rng, 1.5);
  const double c = 0.1;
  const auto m = LogisticRegression::fit(d, 3, c);
  // Independent gradient of mean CE + |W|² / (2 C n) at the fitted weights.
  const auto& w = m.weights();
  std::vector<double> grad(w.size(), 0.0);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    double z[3], total = 0.0;
    for (int k = 0; k < 3; ++k) {
      z[k] = w[6 + k] + d.x.row(r)[0] * w[k] + d.x.row(r)[1] * w[3 + k];
    }
    for (int k = 0; k < 3; ++k) total += std::exp(z[k]);
    for (int k = 0; k < 3; ++k) {
      const double g = std::exp(z[k]) / total - (d.y[r] == static_cast<std::size_t>(k));
      grad[k] += g * d.x.row(r)[0] / d.rows();
      grad[3 + k] += g * d.x.row(r)[1] / d.rows();
      grad[6 + k] += g / d.rows();
    }
  }
  for (int i = 0; i < 6; ++i) grad[i] += w[i] / (c * d.rows());
  for (double g : grad) EXPECT_LT(std::abs(g), 1e-6);
}

TEST(ClassifierTest, FitIsInvariantToRowOrder) {
  Rng rng(16);
  const LabeledRows d = blobs(120, rng, 1.0);
  LabeledRows shuffled;
  shuffled.x.width = 2;
  std::vector<std::size_t> order(d.rows());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t r : order) {
    shuffled.x.values.insert(shuffled.x.values.end(), d.x.row(r), d.x.row(r) + 2);
    shuffled.y.push_back(d.y[r]);
  }
  EXPECT_EQ(LogisticRegression::fit(d, 3, 1.0).weights(),
            LogisticRegression::fit(shuffled, 3, 1.0).weights());
  const auto a = grid_search(d, 3);
  const auto b = grid_search(shuffled, 3);
  EXPECT_EQ(a.best_c, b.best_c);
  EXPECT_EQ(a.cv_accuracy, b.cv_accuracy);
}

TEST(ClassifierTest, SeparableBlobsAreLearned) {
  Rng rng(17);
  const LabeledRows train = blobs(300, rng, 0.3);
  const LabeledRows test = blobs(200, rng, 0.3);
  const auto g = grid_search(train, 3);
  EXPECT_GT(accuracy(g.model.predict(test.x), test.y), 0.97);
  EXPECT_EQ(g.cv_accuracy.size(), 3u);
}

TEST(MlEfficiencyTest, IdenticalTrainingDataGivesFidelityOne) {
  Rng rng(18);
  const LabeledRows train = blobs(200, rng, 1.5);
  const LabeledRows test = blobs(100, rng, 1.5);
  const MlEfficiency m = ml_efficiency(train, train, test, 3);
  EXPECT_EQ(m.fidelity, 1.0);
  EXPECT_EQ(m.utility, m.real_accuracy);
}

TEST(MlEfficiencyTest, ConstantPredictorScoresMajorityShareWithWarning) {
  WarningCapture capture;
  LabeledRows real, synth, test;
  real.x.width = synth.x.width = test.x.width = 1;
  for (int i = 0; i < 100; ++i) {
    const std::size_t y = i < 70 ? 0 : 1;
    test.x.values.push_back(y == 0 ? -1.0 : 1.0);
    test.y.push_back(y);
    real.x.values.push_back(y == 0 ? -1.0 : 1.0);
    real.y.push_back(y);
    synth.x.values.push_back(0.01 * i);
    synth.y.push_back(0);
  }
  const MlEfficiency m = ml_efficiency(real, synth, test, 2);
  EXPECT_DOUBLE_EQ(m.utility, 0.7);
  EXPECT_EQ(m.real_accuracy, 1.0);
  EXPECT_FALSE(g_warnings.empty());
}

TEST(MlEfficiencyTest, ComplementPredictionsHaveFidelityZero) {
  const std::vector<std::size_t> a = {0, 1, 1, 0, 1};
  const std::vector<std::size_t> b = {1, 0, 0, 1, 0};
  EXPECT_EQ(accuracy(a, b), 0.0);
  EXPECT_EQ(accuracy(a, a), 1.0);
}

// ---------------------------------------------------------------------------
// Embedding similarity

TEST(EmbeddingTest, CosineExamples) {
  const std::vector<double> a = {1.0, 2.0, -0.5};
  const std::vector<double> neg = {-1.0, -2.0, 0.5};
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosine(a, neg), -1.0, 1e-15);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0);
}

TEST(EmbeddingTest, ModelAgainstItselfIsOneAndAntipodalIsMinusOne) {
  Rng rng(19);
  const FeatureLayout layout = testing::small_layout();
  const EncodedTable data = testing::random_encoded(layout, 20, rng);
  ModelSpec spec;
  spec.variant = Variant::kTensorConFormer;
  spec.layout = layout;
  Vae model(spec, 3);
  for (Representation which : {Representation::kOutput, Representation::kLatent}) {
    for (double s : embedding_similarity(model, model, data, which)) EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor t = testing::random_tensor({4, 3, 2}, rng);
  for (double s : token_similarity(t, scale(t, -1.0))) EXPECT_NEAR(s, -1.0, 1e-12);
}

TEST(EmbeddingTest, IncompatibleTokenCountsAreRejected) {
  Rng rng(20);
  const FeatureLayout layout = testing::small_layout();
  const EncodedTable data = testing::random_encoded(layout, 5, rng);
  ModelSpec a, b, base;
  a.variant = Variant::kTensorConFormer;
  b.variant = Variant::kTransformed;
  base.variant = Variant::kBase;
  a.layout = b.layout = base.layout = layout;
  Vae ma(a, 1), mb(b, 1), mbase(base, 1);
  EXPECT_THROW(embedding_similarity(ma, mb, data, Representation::kLatent), DimensionError);
  EXPECT_NO_THROW(embedding_similarity(ma, mb, data, Representation::kOutput));
  EXPECT_THROW(embedding_similarity(ma, mbase, data, Representation::kOutput), ContractViolation);
}

// ---------------------------------------------------------------------------
// Comparisons

TEST(WilcoxonTest, IdenticalScoresGivePOne) {
  const std::vector<double> a = {0.1, 0.5, 0.7, 0.2, 0.9, 0.3};
  EXPECT_EQ(wilcoxon_signed_rank(a, a).p_value, 1.0);
}

TEST(WilcoxonTest, UniformWinOverTwentyDatasets) {
  std::vector<double> a, b;
  for (int i = 0; i < 20; ++i) {
    b.push_back(0.5);
    a.push_back(0.5 + 0.01 * (i + 1));
  }
  const WilcoxonResult r = wilcoxon_signed_rank(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_DOUBLE_EQ(r.p_value, 2.0 / std::ldexp(1.0, 20));
}

TEST(WilcoxonTest, ExactDistributionMatchesSignEnumeration) {
  const std::vector<std::vector<double>> diffs = {
      {0.1, 0.2, 0.3, 0.4, 0.5, 0.6},
      {-0.1, 0.2, -0.3, 0.4, 0.5, -0.6},
      {0.2, 0.2, -0.3, 0.3, 0.3, -0.1},  // tied magnitudes
      {-0.5, -0.4, -0.3, -0.2, -0.1, 0.05}};
  for (const auto& d : diffs) {
    std::vector<double> a = d, b(d.size(), 0.0);
    const WilcoxonResult r = wilcoxon_signed_rank(a, b);
    std::vector<double> mag;
    for (double v : d) mag.push_back(std::abs(v));
    const std::vector<double> ranks = mean_ranks(mag);
    double observed = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) observed += d[i] > 0 ? ranks[i] : 0.0;
    int lower = 0, upper = 0;
    for (int mask = 0; mask < 64; ++mask) {
      double w = 0.0;
      for (int i = 0; i < 6; ++i) w += (mask >> i & 1) ? ranks[i] : 0.0;
      lower += w <= observed + 1e-9;
      upper += w >= observed - 1e-9;
    }
    const double expected = std::min(1.0, 2.0 * std::min(lower, upper) / 64.0);
    EXPECT_DOUBLE_EQ(r.p_value, expected);
    EXPECT_DOUBLE_EQ(r.w_plus, observed);
  }
}

TEST(WilcoxonTest, NormalApproximationAboveTwentyFive) {
  std::vector<double> a, b;
  for (int i = 0; i < 30; ++i) {
    a.push_back(i % 3 == 0 ? -0.01 * (i + 1) : 0.01 * (i + 1));
    b.push_back(0.0);
  }
  const WilcoxonResult r = wilcoxon_signed_rank(a, b);
  EXPECT_FALSE(r.exact);
  double w = 0.0;
  for (int i = 0; i < 30; ++i) w += i % 3 == 0 ? 0.0 : i + 1;
  const double mean = 30.0 * 31.0 / 4.0;
  const double sd = std::sqrt(30.0 * 31.0 * 61.0 / 24.0);
  const double z = (w - mean) / sd;
  EXPECT_NEAR(r.p_value, std::erfc(std::abs(z) / std::sqrt(2.0)), 1e-12);
  EXPECT_THROW(
      wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0, 0, 0, 0}),
      ContractViolation);
}

TEST(BayesSignTest, Examples) {
  const std::vector<double> zero(30, 0.0), half(30, 0.5);
  const BayesSignResult win = bayes_sign_test(half, zero);
  EXPECT_GT(win.p_a_better, 0.99);
  EXPECT_EQ(win.right, 30u);
  const BayesSignResult tie = bayes_sign_test(zero, zero);
  EXPECT_GT(tie.p_equivalent, 0.99);
}

TEST(BayesSignTest, SumsToOneDeterministicAndConverged) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> a(12), b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform();
      b[i] = a[i] + 0.06 * (rng.uniform() - 0.5);
    }
    const BayesSignResult r = bayes_sign_test(a, b, kRope, 50000, trial);
    EXPECT_NEAR(r.p_a_better + r.p_equivalent + r.p_b_better, 1.0, 1e-9);
    const BayesSignResult again = bayes_sign_test(a, b, kRope, 50000, trial);
    EXPECT_EQ(r.p_a_better, again.p_a_better);
    const BayesSignResult doubled = bayes_sign_test(a, b, kRope, 100000, trial + 100);
    EXPECT_LT(std::abs(doubled.p_a_better - r.p_a_better), 0.01);
    EXPECT_LT(std::abs(doubled.p_equivalent - r.p_equivalent), 0.01);
    EXPECT_LT(std::abs(doubled.p_b_better - r.p_b_better), 0.01);
  }
}

TEST(BayesSignTest, GammaDrawsHaveTheRightMean) {
  Rng rng(22);
  for (double shape : {1.0, 3.0, 31.0}) {
    double s = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) s += gamma_draw(rng, shape);
    EXPECT_NEAR(s / n, shape, 4.0 * std::sqrt(shape / n));
  }
}

TEST(RankTest, Examples) {
  const std::vector<DatasetScores> dominating = {
      {"small", {0.9, 0.5, 0.4}}, {"small", {0.8, 0.7, 0.1}}, {"large", {0.99, 0.2, 0.3}}};
  const auto ranks = rank_by_group(dominating);
  EXPECT_EQ(ranks.at("small")[0], 1.0);
  EXPECT_EQ(ranks.at("large")[0], 1.0);
  EXPECT_EQ(ranks.size(), 2u);

  const std::vector<DatasetScores> tied = {{"g", {0.5, 0.5, 0.1}}};
  EXPECT_EQ(rank_by_group(tied).at("g"), (std::vector<double>{1.5, 1.5, 3.0}));

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DatasetScores> one = {
        {"g", {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()}}};
    const auto r = rank_by_group(one).at("g");
    EXPECT_DOUBLE_EQ(std::accumulate(r.begin(), r.end(), 0.0), 10.0);
  }
  EXPECT_EQ(size_bin(500, std::vector<double>{1000, 5000}), "<1000");
  EXPECT_EQ(size_bin(2000, std::vector<double>{1000, 5000}), "1000-5000");
  EXPECT_EQ(size_bin(9000, std::vector<double>{1000, 5000}), ">=5000");
}

// ---------------------------------------------------------------------------
// Full report

TEST(EvalReportTest, PermutedRealTableIsAnIdentity) {
  const Table t = toy_generate("circles", 1200, 24);
  const Dataset d = preprocess(t, make_split(target_indices(t), 0.2, 0.15, 24));
  const Table synth = permuted(d.original.select_rows(d.split.train), 25);
  const EvalReport r = evaluate(d, synth);
  EXPECT_EQ(r.one_way_marginals(), 1.0);
  EXPECT_NEAR(r.pairwise_correlation(), 1.0, 1e-12);
  EXPECT_GE(r.alpha_precision(), 0.95);
  EXPECT_GE(r.beta_recall(), 0.95);
  EXPECT_EQ(r.fidelity(), 1.0);
  EXPECT_EQ(r.utility(), r.ml.real_accuracy);
  const nlohmann::json j = r.to_json();
  for (const char* key : {"one_way_marginals", "pairwise_correlation", "alpha_precision",
                          "beta_recall", "utility", "fidelity"}) {
    const double v = j.at("scores").at(key).get<double>();
    EXPECT_GE(v, 0.0) << key;
    EXPECT_LE(v, 1.0) << key;
  }
}

TEST(EvalReportTest, ScoresStayInUnitIntervalForPoorSynthetics) {
  const Table t = toy_generate("xor", 600, 26);
  const Dataset d = preprocess(t, make_split(target_indices(t), 0.2, 0.15, 26));
  const Table other = toy_generate("blobs", 300, 27);
  Table synth = other;
  // Relabel to the xor classes so the target column is valid.
  for (std::string& s : synth.columns[2].labels) s = s == "0" || s == "3" ? "0" : "1";
  const EvalReport r = evaluate(d, synth);
  for (double v : {r.one_way_marginals(), r.pairwise_correlation(), r.alpha_precision(),
                   r.beta_recall(), r.utility(), r.fidelity()}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

}  // namespace
}  // namespace tcvae
