// Copyright 2026 The foodmil Authors
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

namespace foodmil {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 1 (data or validation failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Messages carry the path and line where known.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad column names, out-of-range hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid polygon geometry (unclosed ring, too few vertices).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A computation that has no meaningful answer on the given data, e.g. a
/// class weight with no positive examples or a zero-variance covariate.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace foodmil
