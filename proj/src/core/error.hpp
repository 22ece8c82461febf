// Copyright 2026 The gtxai Authors
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

#include <stdexcept>
#include <string>

namespace gtx {

// Base of every error thrown by the library. The C API maps the concrete
// subclass onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, unknown names, out-of-range parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or dimension mismatch between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Numerically degenerate input (constant column, empty class, NaN loss...).
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

#define GTX_REQUIRE(cond, ExcType, msg)   \
  do {                                    \
    if (!(cond)) throw ExcType((msg));    \
  } while (0)

}  // namespace gtx
