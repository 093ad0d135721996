// Copyright (c) 2026 The ska-tdnn Authors. All Rights Reserved.
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

#ifndef SKA_ERROR_H_
#define SKA_ERROR_H_

#include <stdexcept>
#include <string>

namespace ska {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: dimensions, divisibility, kernel shapes, variant
// mismatches. The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, degenerate statistics. Exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ska

#endif  // SKA_ERROR_H_
