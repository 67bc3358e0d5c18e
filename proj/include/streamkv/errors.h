// Copyright 2026 The StreamKV Authors
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

namespace streamkv {

// Base of every error raised by the library. The CLI maps ConfigError to
// exit status 1 and everything else to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied parameters (zero dimensions, out-of-range ratios).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed trace file. The message names the offending header field.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Mismatched matrix or bit-row dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Broken cross-structure invariant: unknown cluster or token ids,
// duplicate placements, zero token counts.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// A single frame does not fit in device memory.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A statistic is undefined for the input (zero variance, empty selection).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace streamkv
