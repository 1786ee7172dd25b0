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

#include <iostream>
#include <stdexcept>
#include <string>

namespace tcvae {

// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data (files, tables, schemas) is malformed or unusable.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation produced NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Warnings go to stderr unless a sink is installed (tests install one to
// capture them).
using WarningSink = void (*)(const std::string&);

inline WarningSink& warning_sink() {
  static WarningSink sink = nullptr;
  return sink;
}

inline void warn(const std::string& message) {
  if (auto sink = warning_sink()) {
    sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace tcvae
