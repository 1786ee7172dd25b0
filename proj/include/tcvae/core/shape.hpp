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

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>

#include "tcvae/core/error.hpp"

namespace tcvae {

inline constexpr std::size_t kMaxRank = 4;

// Extents of a dense row-major tensor of order 1 to 4.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<std::size_t> dims) {
    assign(std::span<const std::size_t>(dims.begin(), dims.size()));
  }

  explicit Shape(std::span<const std::size_t> dims) { assign(dims); }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t back() const { return dims_[rank_ - 1]; }

  std::size_t numel() const {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  // Product of extents in [begin, end).
  std::size_t span_size(std::size_t begin, std::size_t end) const {
    std::size_t n = 1;
    for (std::size_t i = begin; i < end; ++i) n *= dims_[i];
    return n;
  }

  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  Shape with(std::size_t axis, std::size_t extent) const {
    Shape out = *this;
    out.dims_[axis] = extent;
    return out;
  }

  bool operator==(const Shape& other) const {
    if (rank_ != other.rank_) return false;
    for (std::size_t i = 0; i < rank_; ++i) {
      if (dims_[i] != other.dims_[i]) return false;
    }
    return true;
  }

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < rank_; ++i) {
      if (i) s += "x";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  void assign(std::span<const std::size_t> dims) {
    if (dims.empty() || dims.size() > kMaxRank) {
      throw DimensionError("tensor order must be in [1, 4], got " +
                           std::to_string(dims.size()));
    }
    rank_ = dims.size();
    for (std::size_t i = 0; i < rank_; ++i) dims_[i] = dims[i];
  }

  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

}  // namespace tcvae
