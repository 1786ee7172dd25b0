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

// Ingestion, preprocessing (column dropping, imputation, quantile-Gaussian
// and one-hot encoding), inverse transformation and train/val/test splits.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/core/random.hpp"
#include "tcvae/data/quantile.hpp"
#include "tcvae/data/schema.hpp"
#include "tcvae/data/table.hpp"

namespace tcvae {

struct LoadedCsv {
  Table table;
  std::optional<std::uint64_t> seed;  // from the schema sidecar, if given
};

// Column kinds are inferred when no schema is given: a column whose non-empty
// cells all parse as numbers is numerical, anything else categorical, and the
// last column is the target.
inline std::vector<ColumnKind> infer_kinds(const RawTable& raw) {
  std::vector<ColumnKind> kinds;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    bool numeric = true;
    for (const auto& row : raw.rows) {
      if (!row[c].empty() && !parse_number(row[c])) {
        numeric = false;
        break;
      }
    }
    kinds.push_back(numeric ? ColumnKind::kNumerical : ColumnKind::kCategorical);
  }
  if (!kinds.empty()) kinds.back() = ColumnKind::kTarget;
  return kinds;
}

inline LoadedCsv load_csv_text(std::string_view csv_text,
                               const nlohmann::json* schema_json = nullptr) {
  RawTable raw = parse_csv(csv_text);
  if (raw.header.empty()) throw DataError("CSV header is empty");
  LoadedCsv out;
  std::vector<ColumnKind> kinds = infer_kinds(raw);
  if (schema_json != nullptr) {
    std::vector<bool> declared(raw.header.size(), false);
    for (const auto& c : schema_json->at("columns")) {
      const auto name = c.at("name").get<std::string>();
      const auto it = std::find(raw.header.begin(), raw.header.end(), name);
      if (it == raw.header.end()) {
        throw DataError("schema names unknown column '" + name + "'");
      }
      const auto idx = static_cast<std::size_t>(it - raw.header.begin());
      kinds[idx] = column_kind_from_string(c.at("kind").get<std::string>());
      declared[idx] = true;
    }
    // Undeclared columns keep their inferred kind, but the inferred target
    // only stands if the schema declares none.
    bool has_target = false;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (declared[i] && kinds[i] == ColumnKind::kTarget) has_target = true;
    }
    if (has_target && !declared.back() && kinds.back() == ColumnKind::kTarget) {
      const std::size_t last = kinds.size() - 1;
      bool numeric = true;
      for (const auto& row : raw.rows) {
        if (!row[last].empty() && !parse_number(row[last])) numeric = false;
      }
      kinds.back() = numeric ? ColumnKind::kNumerical : ColumnKind::kCategorical;
    }
    if (schema_json->contains("seed")) out.seed = schema_json->at("seed").get<std::uint64_t>();
  }
  if (std::count(kinds.begin(), kinds.end(), ColumnKind::kTarget) != 1) {
    throw DataError("exactly one target column is required");
  }
  out.table = make_table(raw, kinds);
  return out;
}

inline LoadedCsv load_csv(const std::string& path, const std::string& schema_path = "") {
  const std::string text = read_file(path);
  if (schema_path.empty()) return load_csv_text(text);
  nlohmann::json schema;
  try {
    schema = nlohmann::json::parse(read_file(schema_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("schema '" + schema_path + "': " + e.what());
  }
  return load_csv_text(text, &schema);
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  bool stratified = false;
};

// n_test = floor(N * test_fraction); n_val = floor((N - n_test) * val_fraction).
// Within each class the rows are shuffled and assigned the sort key
// (i + 0.5) / n_class; ordering all rows by that key and cutting test, val,
// train off the front keeps every class's share equal across the three parts.
// Falls back to a plain shuffle (with a warning) if some class has fewer rows
// than there are parts.
inline Split make_split(std::span<const std::size_t> labels, double test_fraction,
                        double val_fraction, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DataError("test fraction must be in (0, 1)");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DataError("validation fraction must be in (0, 1)");
  }
  if (test_fraction + val_fraction >= 1.0) {
    throw DataError("test and validation fractions must sum to less than 1");
  }
  const auto n_test = static_cast<std::size_t>(std::floor(n * test_fraction + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor((n - n_test) * val_fraction + 1e-9));
  if (n_test + n_val >= n) throw DataError("split leaves no training rows");

  Rng rng(mix_seed(seed, 0x5b117));
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  bool stratify = true;
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < 3) stratify = false;
  }
  if (!stratify) warn("a class has fewer than 3 rows; using an unstratified split");

  std::vector<std::size_t> order;
  if (stratify) {
    struct Keyed {
      double key;
      std::size_t label;
      std::size_t row;
    };
    std::vector<Keyed> keyed;
    for (auto& [label, rows] : by_class) {
      rng.shuffle(rows);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        keyed.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(rows.size()),
                         label, rows[i]});
      }
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
      return a.key != b.key ? a.key < b.key : a.label < b.label;
    });
    for (const Keyed& k : keyed) order.push_back(k.row);
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  }

  Split split;
  split.stratified = stratify;
  split.test.assign(order.begin(), order.begin() + n_test);
  split.val.assign(order.begin() + n_test, order.begin() + n_test + n_val);
  split.train.assign(order.begin() + n_test + n_val, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

inline Split make_split(std::size_t n, double test_fraction, double val_fraction,
                        std::uint64_t seed) {
  std::vector<std::size_t> labels(n, 0);
  return make_split(labels, test_fraction, val_fraction, seed);
}

inline void validate_split(const Split& split, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (std::size_t i : *part) {
      if (i >= n) throw DataError("split index out of range");
      ++seen[i];
    }
  }
  for (int s : seen) {
    if (s != 1) throw DataError("split indices do not partition the rows");
  }
  if (split.train.empty()) throw DataError("split has no training rows");
}

inline nlohmann::json to_json(const Split& split) {
  return {{"train", split.train},
          {"val", split.val},
          {"test", split.test},
          {"stratified", split.stratified}};
}

inline Split split_from_json(const nlohmann::json& j) {
  Split s;
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.val = j.at("val").get<std::vector<std::size_t>>();
  s.test = j.at("test").get<std::vector<std::size_t>>();
  s.stratified = j.value("stratified", false);
  return s;
}

// ---------------------------------------------------------------------------
// Encoded representation

// Model-space rows: numerical block [rows x M_n] in quantile-Gaussian space,
// one-hot block [rows x sum |C_j|], and target class indices.
struct EncodedTable {
  std::size_t rows = 0;
  std::size_t num_numerical = 0;
  std::size_t onehot_width = 0;
  std::vector<double> numeric;
  std::vector<double> onehot;
  std::vector<std::size_t> labels;

  std::size_t width() const { return num_numerical + onehot_width; }

  // Row-major [rows x M'] concatenation of the numerical and one-hot blocks.
  std::vector<double> features() const {
    std::vector<double> out(rows * width());
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(numeric.begin() + r * num_numerical, num_numerical,
                  out.begin() + r * width());
      std::copy_n(onehot.begin() + r * onehot_width, onehot_width,
                  out.begin() + r * width() + num_numerical);
    }
    return out;
  }

  EncodedTable select_rows(std::span<const std::size_t> idx) const {
    EncodedTable out;
    out.rows = idx.size();
    out.num_numerical = num_numerical;
    out.onehot_width = onehot_width;
    for (std::size_t r : idx) {
      out.numeric.insert(out.numeric.end(), numeric.begin() + r * num_numerical,
                         numeric.begin() + (r + 1) * num_numerical);
      out.onehot.insert(out.onehot.end(), onehot.begin() + r * onehot_width,
                        onehot.begin() + (r + 1) * onehot_width);
      out.labels.push_back(labels[r]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Preprocessor

struct NumericalEncoder {
  double fill = 0.0;  // training mean
  QuantileGaussianTransform transform;
};

struct CategoricalEncoder {
  std::string fill;  // training mode
};

class Preprocessor {
 public:
  Preprocessor() = default;

  // Fits every statistic on `train_rows` only. Target classes are collected
  // from all rows so that every split maps to a known class index.
  static Preprocessor fit(const Table& table, std::span<const std::size_t> train_rows) {
    if (train_rows.empty()) throw DataError("cannot fit preprocessing on zero training rows");
    Preprocessor p;
    for (const Column& col : table.columns) {
      if (col.kind == ColumnKind::kTarget) {
        std::set<std::string> classes;
        for (std::size_t r = 0; r < col.size(); ++r) {
          if (col.missing(r)) {
            throw DataError("target column '" + col.name + "' has missing values");
          }
          classes.insert(col.labels[r]);
        }
        p.schema_.columns.push_back({col.name, col.kind, {classes.begin(), classes.end()}});
        p.numerical_.emplace_back();
        p.categorical_.emplace_back();
        continue;
      }
      if (col.numerical()) {
        std::vector<double> present;
        for (std::size_t r : train_rows) {
          if (!col.missing(r)) present.push_back(col.numbers[r]);
        }
        const bool constant =
            !present.empty() &&
            std::all_of(present.begin(), present.end(),
                        [&](double v) { return v == present.front(); });
        if (present.empty() || constant) {
          p.schema_.dropped.push_back(col.name);
          continue;
        }
        NumericalEncoder enc;
        double sum = 0.0;
        for (double v : present) sum += v;
        enc.fill = sum / static_cast<double>(present.size());
        std::vector<double> imputed;
        imputed.reserve(train_rows.size());
        for (std::size_t r : train_rows) {
          imputed.push_back(col.missing(r) ? enc.fill : col.numbers[r]);
        }
        enc.transform = QuantileGaussianTransform::fit(imputed);
        p.schema_.columns.push_back({col.name, col.kind, {}});
        p.numerical_.push_back(std::move(enc));
        p.categorical_.emplace_back();
      } else {
        std::map<std::string, std::size_t> counts;
        for (std::size_t r : train_rows) {
          if (!col.missing(r)) ++counts[col.labels[r]];
        }
        if (counts.size() < 2) {
          p.schema_.dropped.push_back(col.name);
          continue;
        }
        CategoricalEncoder enc;
        std::size_t best = 0;
        std::vector<std::string> categories;
        for (const auto& [label, count] : counts) {  // lexicographic; first max wins
          categories.push_back(label);
          if (count > best) {
            best = count;
            enc.fill = label;
          }
        }
        p.schema_.columns.push_back({col.name, col.kind, std::move(categories)});
        p.numerical_.emplace_back();
        p.categorical_.push_back(std::move(enc));
      }
    }
    p.schema_.validate();
    return p;
  }

  const FeatureSchema& schema() const { return schema_; }

  const NumericalEncoder& numerical_encoder(std::size_t column) const {
    return numerical_.at(column);
  }
  const CategoricalEncoder& categorical_encoder(std::size_t column) const {
    return categorical_.at(column);
  }

  // Retained columns with missing cells filled, in original units. Unseen
  // feature categories are replaced by the training mode.
  Table impute(const Table& table) const {
    Table out;
    for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
      const ColumnSchema& cs = schema_.columns[c];
      Column col = table.column(cs.name);
      if (col.kind != cs.kind) throw DataError("column '" + cs.name + "' changed kind");
      if (cs.kind == ColumnKind::kNumerical) {
        for (double& v : col.numbers) {
          if (std::isnan(v)) v = numerical_[c].fill;
        }
      } else if (cs.kind == ColumnKind::kCategorical) {
        for (std::string& s : col.labels) {
          if (s.empty() || !std::binary_search(cs.categories.begin(), cs.categories.end(), s)) {
            s = categorical_[c].fill;
          }
        }
      } else {
        for (const std::string& s : col.labels) {
          if (!std::binary_search(cs.categories.begin(), cs.categories.end(), s)) {
            throw DataError("unknown class '" + s + "' in target column");
          }
        }
      }
      out.columns.push_back(std::move(col));
    }
    return out;
  }

  EncodedTable encode(const Table& table) const {
    const Table t = impute(table);
    EncodedTable e;
    e.rows = t.rows();
    e.num_numerical = schema_.num_numerical();
    e.onehot_width = schema_.onehot_width();
    e.numeric.resize(e.rows * e.num_numerical);
    e.onehot.assign(e.rows * e.onehot_width, 0.0);
    e.labels.resize(e.rows);
    std::size_t num = 0;
    std::size_t offset = 0;
    for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
      const ColumnSchema& cs = schema_.columns[c];
      const Column& col = t.columns[c];
      if (cs.kind == ColumnKind::kNumerical) {
        for (std::size_t r = 0; r < e.rows; ++r) {
          e.numeric[r * e.num_numerical + num] = numerical_[c].transform.forward(col.numbers[r]);
        }
        ++num;
      } else {
        for (std::size_t r = 0; r < e.rows; ++r) {
          const auto idx = category_index(cs, col.labels[r]);
          if (cs.kind == ColumnKind::kTarget) {
            e.labels[r] = idx;
          } else {
            e.onehot[r * e.onehot_width + offset + idx] = 1.0;
          }
        }
        if (cs.kind == ColumnKind::kCategorical) offset += cs.categories.size();
      }
    }
    return e;
  }

  // Numerical values through the inverse quantile map, each one-hot block to
  // its argmax category (first index on ties), labels to class names.
  Table decode(const EncodedTable& e) const {
    if (e.num_numerical != schema_.num_numerical() || e.onehot_width != schema_.onehot_width()) {
      throw DimensionError("encoded rows do not match the fitted schema");
    }
    Table out;
    std::size_t num = 0;
    std::size_t offset = 0;
    for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
      const ColumnSchema& cs = schema_.columns[c];
      Column col{cs.name, cs.kind, {}, {}};
      if (cs.kind == ColumnKind::kNumerical) {
        for (std::size_t r = 0; r < e.rows; ++r) {
          col.numbers.push_back(
              numerical_[c].transform.inverse(e.numeric[r * e.num_numerical + num]));
        }
        ++num;
      } else if (cs.kind == ColumnKind::kCategorical) {
        const std::size_t k = cs.categories.size();
        for (std::size_t r = 0; r < e.rows; ++r) {
          const double* block = e.onehot.data() + r * e.onehot_width + offset;
          col.labels.push_back(cs.categories[static_cast<std::size_t>(
              std::max_element(block, block + k) - block)]);
        }
        offset += k;
      } else {
        for (std::size_t r = 0; r < e.rows; ++r) {
          col.labels.push_back(cs.categories.at(e.labels[r]));
        }
      }
      out.columns.push_back(std::move(col));
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
      const ColumnSchema& cs = schema_.columns[c];
      nlohmann::json j = {{"name", cs.name}, {"kind", tcvae::to_string(cs.kind)}};
      if (cs.kind == ColumnKind::kNumerical) {
        j["mean"] = numerical_[c].fill;
        j["clip"] = QuantileGaussianTransform::kClip;
        j["quantiles"] = numerical_[c].transform.quantiles();
      } else if (cs.kind == ColumnKind::kCategorical) {
        j["mode"] = categorical_[c].fill;
      }
      cols.push_back(std::move(j));
    }
    return {{"columns", cols}};
  }

  static Preprocessor from_json(const FeatureSchema& schema, const nlohmann::json& j) {
    Preprocessor p;
    p.schema_ = schema;
    const auto& cols = j.at("columns");
    if (cols.size() != schema.columns.size()) {
      throw DataError("transforms do not match the schema");
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (cols[c].at("name").get<std::string>() != schema.columns[c].name) {
        throw DataError("transforms do not match the schema");
      }
      NumericalEncoder num;
      CategoricalEncoder cat;
      if (schema.columns[c].kind == ColumnKind::kNumerical) {
        num.fill = cols[c].at("mean").get<double>();
        num.transform =
            QuantileGaussianTransform(cols[c].at("quantiles").get<std::vector<double>>());
      } else if (schema.columns[c].kind == ColumnKind::kCategorical) {
        cat.fill = cols[c].at("mode").get<std::string>();
      }
      p.numerical_.push_back(std::move(num));
      p.categorical_.push_back(std::move(cat));
    }
    return p;
  }

 private:
  static std::size_t category_index(const ColumnSchema& cs, const std::string& label) {
    const auto it = std::lower_bound(cs.categories.begin(), cs.categories.end(), label);
    if (it == cs.categories.end() || *it != label) {
      throw DataError("unknown category '" + label + "' in column '" + cs.name + "'");
    }
    return static_cast<std::size_t>(it - cs.categories.begin());
  }

  FeatureSchema schema_;
  // Indexed by retained column; only the entry matching the column kind is used.
  std::vector<NumericalEncoder> numerical_;
  std::vector<CategoricalEncoder> categorical_;
};

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  Preprocessor preprocessor;
  Table original;        // retained columns, imputed, original units, all rows
  EncodedTable encoded;  // all rows
  Split split;

  const FeatureSchema& schema() const { return preprocessor.schema(); }
  std::size_t rows() const { return encoded.rows; }
  EncodedTable part(std::span<const std::size_t> idx) const { return encoded.select_rows(idx); }
};

inline Dataset preprocess(const Table& table, Split split) {
  validate_split(split, table.rows());
  Dataset d;
  d.preprocessor = Preprocessor::fit(table, split.train);
  d.original = d.preprocessor.impute(table);
  d.encoded = d.preprocessor.encode(table);
  d.split = std::move(split);
  for (double v : d.encoded.numeric) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value after preprocessing");
  }
  return d;
}

// Target class index of every row, with classes in sorted order; used to
// stratify a split before the preprocessor exists.
inline std::vector<std::size_t> target_indices(const Table& table) {
  const Column* target = nullptr;
  for (const Column& c : table.columns) {
    if (c.kind == ColumnKind::kTarget) target = &c;
  }
  if (target == nullptr) throw DataError("table has no target column");
  std::set<std::string> classes(target->labels.begin(), target->labels.end());
  const std::vector<std::string> sorted(classes.begin(), classes.end());
  std::vector<std::size_t> out;
  for (const std::string& s : target->labels) {
    out.push_back(static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), s) - sorted.begin()));
  }
  return out;
}

}  // namespace tcvae
