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

// Typed tables in original units, and RFC-4180 CSV reading/writing.

#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tcvae/core/error.hpp"

namespace tcvae {

enum class ColumnKind { kNumerical, kCategorical, kTarget };

inline std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kNumerical: return "numerical";
    case ColumnKind::kCategorical: return "categorical";
    case ColumnKind::kTarget: return "target";
  }
  return "?";
}

inline ColumnKind column_kind_from_string(std::string_view s) {
  if (s == "numerical") return ColumnKind::kNumerical;
  if (s == "categorical") return ColumnKind::kCategorical;
  if (s == "target") return ColumnKind::kTarget;
  throw DataError("unknown column kind '" + std::string(s) + "'");
}

// Header plus string cells; an empty cell is a missing value.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// Shortest representation that parses back to the same double.
inline std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

inline RawTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("CSV ends inside a quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();

  RawTable table;
  if (records.empty() || (records.size() == 1 && records[0].size() == 1 &&
                          records[0][0].empty())) {
    throw DataError("CSV file is empty");
  }
  table.header = std::move(records[0]);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() == 1 && records[r][0].empty()) continue;  // blank line
    if (records[r].size() != table.header.size()) {
      throw DataError("ragged CSV: row " + std::to_string(r + 1) + " has " +
                      std::to_string(records[r].size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

inline RawTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string to_csv(const RawTable& table) {
  std::string out;
  auto write_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(row[i]);
    }
    out += '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) write_row(row);
  return out;
}

// One typed column. Numerical columns store values in `numbers` (NaN marks a
// missing cell); categorical and target columns store `labels` ("" marks a
// missing cell).
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumerical;
  std::vector<double> numbers;
  std::vector<std::string> labels;

  bool numerical() const { return kind == ColumnKind::kNumerical; }
  std::size_t size() const { return numerical() ? numbers.size() : labels.size(); }
  bool missing(std::size_t row) const {
    return numerical() ? std::isnan(numbers[row]) : labels[row].empty();
  }
  std::string cell(std::size_t row) const {
    if (missing(row)) return "";
    return numerical() ? format_number(numbers[row]) : labels[row];
  }
};

class Table {
 public:
  std::vector<Column> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns[0].size(); }

  const Column* find(std::string_view name) const {
    for (const Column& c : columns) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  const Column& column(std::string_view name) const {
    const Column* c = find(name);
    if (c == nullptr) throw DataError("no column named '" + std::string(name) + "'");
    return *c;
  }

  Table select_rows(std::span<const std::size_t> rows) const {
    Table out;
    for (const Column& c : columns) {
      Column sub{c.name, c.kind, {}, {}};
      for (std::size_t r : rows) {
        if (c.numerical()) {
          sub.numbers.push_back(c.numbers.at(r));
        } else {
          sub.labels.push_back(c.labels.at(r));
        }
      }
      out.columns.push_back(std::move(sub));
    }
    return out;
  }

  RawTable to_raw() const {
    RawTable raw;
    for (const Column& c : columns) raw.header.push_back(c.name);
    raw.rows.resize(rows());
    for (std::size_t r = 0; r < rows(); ++r) {
      for (const Column& c : columns) raw.rows[r].push_back(c.cell(r));
    }
    return raw;
  }
};

// Types the cells of `raw` with the given per-column kinds (same order as the
// header). Numerical cells that do not parse are a data error.
inline Table make_table(const RawTable& raw, const std::vector<ColumnKind>& kinds) {
  if (kinds.size() != raw.header.size()) {
    throw DataError("kind list does not match the header");
  }
  Table table;
  for (std::size_t c = 0; c < kinds.size(); ++c) {
    Column col{raw.header[c], kinds[c], {}, {}};
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      const std::string& cell = raw.rows[r][c];
      if (col.numerical()) {
        if (cell.empty()) {
          col.numbers.push_back(std::numeric_limits<double>::quiet_NaN());
        } else if (auto v = parse_number(cell)) {
          col.numbers.push_back(*v);
        } else {
          throw DataError("column '" + col.name + "' row " + std::to_string(r + 1) +
                          ": '" + cell + "' is not a number");
        }
      } else {
        col.labels.push_back(cell);
      }
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

}  // namespace tcvae
