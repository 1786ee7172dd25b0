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

// The full evaluation of one synthetic table against a prepared dataset.
//
// Marginals and correlations compare original-unit tables (the real training
// split against the synthetic rows). Support coverage and the classifiers
// work on the preprocessed encoding fitted on the real training split;
// support rows also carry the one-hot target.

#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/data/dataset.hpp"
#include "tcvae/eval/classifier.hpp"
#include "tcvae/eval/statistics.hpp"

namespace tcvae {

inline RowMatrix support_rows(const EncodedTable& e, std::size_t classes) {
  RowMatrix m;
  m.width = e.width() + classes;
  const std::vector<double> features = e.features();
  m.values.reserve(e.rows * m.width);
  for (std::size_t r = 0; r < e.rows; ++r) {
    m.values.insert(m.values.end(), features.begin() + r * e.width(),
                    features.begin() + (r + 1) * e.width());
    for (std::size_t c = 0; c < classes; ++c) m.values.push_back(e.labels[r] == c ? 1.0 : 0.0);
  }
  return m;
}

inline LabeledRows classifier_rows(const EncodedTable& e) {
  LabeledRows d;
  d.x.width = e.width();
  d.x.values = e.features();
  d.y = e.labels;
  return d;
}

struct EvalOptions {
  LogisticConfig classifier;
  nlohmann::json metadata = nlohmann::json::object();  // dataset, model, seed
};

struct EvalReport {
  MarginalReport marginals;
  CorrelationReport correlations;
  SupportScore precision;
  SupportScore recall;
  MlEfficiency ml;
  nlohmann::json metadata;

  double one_way_marginals() const { return marginals.score; }
  double pairwise_correlation() const { return correlations.score; }
  double alpha_precision() const { return precision.score; }
  double beta_recall() const { return recall.score; }
  double utility() const { return ml.utility; }
  double fidelity() const { return ml.fidelity; }

  nlohmann::json to_json() const {
    nlohmann::json per_column = nlohmann::json::object();
    for (const ColumnScore& c : marginals.columns) per_column[c.name] = c.score;
    nlohmann::json per_pair = nlohmann::json::array();
    for (const PairScore& p : correlations.pairs) {
      per_pair.push_back({{"first", p.first}, {"second", p.second}, {"score", p.score}});
    }
    const auto curve = [](const SupportScore& s) {
      return nlohmann::json{{"levels", s.curve.levels}, {"inclusion", s.curve.inclusion}};
    };
    return {{"scores",
             {{"one_way_marginals", one_way_marginals()},
              {"pairwise_correlation", pairwise_correlation()},
              {"alpha_precision", alpha_precision()},
              {"beta_recall", beta_recall()},
              {"utility", utility()},
              {"fidelity", fidelity()}}},
            {"one_way_marginals", per_column},
            {"pairwise_correlation", {{"pairs", per_pair}, {"skipped", correlations.skipped}}},
            {"alpha_precision", curve(precision)},
            {"beta_recall", curve(recall)},
            {"ml_efficiency", tcvae::to_json(ml)},
            {"classifier",
             {{"kind", "multinomial_logistic_regression"}, {"feature_space", "preprocessed"}}},
            {"metadata", metadata}};
  }
};

inline EvalReport evaluate(const Dataset& real, const Table& synth,
                           const EvalOptions& options = {}) {
  const std::size_t classes = real.schema().num_classes();
  const Table real_train = real.original.select_rows(real.split.train);
  // Keep only the retained columns, in schema order.
  Table synth_cols;
  for (const Column& c : real_train.columns) synth_cols.columns.push_back(synth.column(c.name));
  if (synth_cols.rows() == 0) throw DataError("synthetic table is empty");

  EvalReport r;
  r.metadata = options.metadata;
  r.marginals = one_way_marginals(real_train, synth_cols);
  r.correlations = pairwise_correlation(real_train, synth_cols);

  const EncodedTable enc_train = real.part(real.split.train);
  const EncodedTable enc_test = real.part(real.split.test);
  const EncodedTable enc_synth = real.preprocessor.encode(synth_cols);
  r.precision = alpha_precision(support_rows(enc_train, classes), support_rows(enc_synth, classes));
  r.recall = beta_recall(support_rows(enc_train, classes), support_rows(enc_synth, classes));
  r.ml = ml_efficiency(classifier_rows(enc_train), classifier_rows(enc_synth),
                       classifier_rows(enc_test), classes, options.classifier);
  r.metadata["classifier_c_grid"] = options.classifier.c_grid;
  return r;
}

}  // namespace tcvae
