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

#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/data/table.hpp"

namespace tcvae {

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::kNumerical;
  std::vector<std::string> categories;  // categorical and target only

  bool operator==(const ColumnSchema&) const = default;
};

// Fitted schema of the retained columns, in input order. The model-facing
// feature vector lists all numerical columns first, then the categorical
// columns, each group in input order.
class FeatureSchema {
 public:
  std::vector<ColumnSchema> columns;
  std::vector<std::string> dropped;

  std::vector<std::size_t> numerical_columns() const { return of_kind(ColumnKind::kNumerical); }
  std::vector<std::size_t> categorical_columns() const {
    return of_kind(ColumnKind::kCategorical);
  }

  std::size_t target_column() const {
    auto t = of_kind(ColumnKind::kTarget);
    if (t.size() != 1) {
      throw DataError("schema must have exactly one target column, found " +
                      std::to_string(t.size()));
    }
    return t[0];
  }

  const ColumnSchema& target() const { return columns[target_column()]; }

  std::size_t num_numerical() const { return numerical_columns().size(); }
  std::size_t num_categorical() const { return categorical_columns().size(); }
  std::size_t num_features() const { return num_numerical() + num_categorical(); }
  std::size_t num_classes() const { return target().categories.size(); }

  std::vector<std::size_t> category_sizes() const {
    std::vector<std::size_t> sizes;
    for (std::size_t c : categorical_columns()) sizes.push_back(columns[c].categories.size());
    return sizes;
  }

  std::size_t onehot_width() const {
    std::size_t w = 0;
    for (std::size_t s : category_sizes()) w += s;
    return w;
  }

  // M' = M_n + sum_j |C_j|.
  std::size_t encoded_width() const { return num_numerical() + onehot_width(); }

  void validate() const {
    target_column();
    for (const ColumnSchema& c : columns) {
      if (c.kind == ColumnKind::kNumerical) continue;
      for (std::size_t i = 1; i < c.categories.size(); ++i) {
        if (!(c.categories[i - 1] < c.categories[i])) {
          throw DataError("categories of '" + c.name + "' are not sorted and unique");
        }
      }
      if (c.kind == ColumnKind::kCategorical && c.categories.size() < 2) {
        throw DataError("categorical column '" + c.name + "' has fewer than 2 categories");
      }
    }
    if (num_features() == 0) throw DataError("no usable feature columns");
  }

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<std::size_t> of_kind(ColumnKind kind) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].kind == kind) out.push_back(i);
    }
    return out;
  }
};

inline nlohmann::json to_json(const FeatureSchema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const ColumnSchema& c : schema.columns) {
    nlohmann::json j = {{"name", c.name}, {"kind", to_string(c.kind)}};
    if (c.kind != ColumnKind::kNumerical) j["categories"] = c.categories;
    cols.push_back(std::move(j));
  }
  return {{"columns", cols},
          {"dropped", schema.dropped},
          {"M_n", schema.num_numerical()},
          {"M_c", schema.num_categorical()},
          {"M", schema.num_features()},
          {"M_prime", schema.encoded_width()},
          {"num_classes", schema.num_classes()}};
}

inline FeatureSchema feature_schema_from_json(const nlohmann::json& j) {
  FeatureSchema schema;
  for (const auto& c : j.at("columns")) {
    ColumnSchema col;
    col.name = c.at("name").get<std::string>();
    col.kind = column_kind_from_string(c.at("kind").get<std::string>());
    if (c.contains("categories")) {
      col.categories = c.at("categories").get<std::vector<std::string>>();
    }
    schema.columns.push_back(std::move(col));
  }
  if (j.contains("dropped")) schema.dropped = j.at("dropped").get<std::vector<std::string>>();
  schema.validate();
  return schema;
}

}  // namespace tcvae
