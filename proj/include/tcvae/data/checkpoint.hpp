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

// Dataset checkpoint directory:
//   schema.json      fitted FeatureSchema
//   transforms.json  per-column fill values and quantile knots
//   X.bin            u64 rows, u64 cols, then f64 row-major [x_num | one-hot | y]
//   splits.json      train / val / test row indices
//   original.csv     retained columns after imputation, original units

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/data/dataset.hpp"

namespace tcvae {

static_assert(std::endian::native == std::endian::little,
              "binary checkpoints assume a little-endian host");

inline void write_matrix(const std::filesystem::path& path, std::uint64_t rows,
                         std::uint64_t cols, const std::vector<double>& values) {
  if (values.size() != rows * cols) throw DimensionError("matrix size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

struct Matrix {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> values;
};

inline Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  Matrix m;
  in.read(reinterpret_cast<char*>(&m.rows), sizeof(m.rows));
  in.read(reinterpret_cast<char*>(&m.cols), sizeof(m.cols));
  if (!in) throw DataError("truncated header in '" + path.string() + "'");
  const auto size = std::filesystem::file_size(path);
  if (m.cols != 0 && m.rows > (size - 16) / 8 / m.cols) {
    throw DataError("'" + path.string() + "' is shorter than its header claims");
  }
  m.values.resize(m.rows * m.cols);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!in) throw DataError("truncated data in '" + path.string() + "'");
  return m;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path.string(), j.dump(2) + "\n");
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  write_json(dir / "schema.json", to_json(d.schema()));
  write_json(dir / "transforms.json", d.preprocessor.to_json());
  write_json(dir / "splits.json", to_json(d.split));
  const EncodedTable& e = d.encoded;
  const std::size_t cols = e.width() + 1;
  std::vector<double> x(e.rows * cols);
  for (std::size_t r = 0; r < e.rows; ++r) {
    double* row = x.data() + r * cols;
    std::copy_n(e.numeric.data() + r * e.num_numerical, e.num_numerical, row);
    std::copy_n(e.onehot.data() + r * e.onehot_width, e.onehot_width, row + e.num_numerical);
    row[cols - 1] = static_cast<double>(e.labels[r]);
  }
  write_matrix(dir / "X.bin", e.rows, cols, x);
  write_file((dir / "original.csv").string(), to_csv(d.original.to_raw()));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("'" + dir.string() + "' is not a dataset directory");
  }
  Dataset d;
  const FeatureSchema schema = feature_schema_from_json(read_json(dir / "schema.json"));
  d.preprocessor = Preprocessor::from_json(schema, read_json(dir / "transforms.json"));
  d.split = split_from_json(read_json(dir / "splits.json"));

  const Matrix x = read_matrix(dir / "X.bin");
  EncodedTable& e = d.encoded;
  e.num_numerical = schema.num_numerical();
  e.onehot_width = schema.onehot_width();
  if (x.cols != e.width() + 1) throw DataError("X.bin width does not match the schema");
  e.rows = x.rows;
  for (std::size_t r = 0; r < e.rows; ++r) {
    const double* row = x.values.data() + r * x.cols;
    e.numeric.insert(e.numeric.end(), row, row + e.num_numerical);
    e.onehot.insert(e.onehot.end(), row + e.num_numerical, row + e.width());
    const double label = row[x.cols - 1];
    if (!(label >= 0.0 && label < static_cast<double>(schema.num_classes()))) {
      throw DataError("X.bin has an out-of-range class index");
    }
    e.labels.push_back(static_cast<std::size_t>(label));
  }
  validate_split(d.split, e.rows);

  std::vector<ColumnKind> kinds;
  for (const ColumnSchema& c : schema.columns) kinds.push_back(c.kind);
  d.original = make_table(read_csv((dir / "original.csv").string()), kinds);
  if (d.original.rows() != e.rows) throw DataError("original.csv row count mismatch");
  return d;
}

}  // namespace tcvae
