// Copyright 2026 The vrexmix Authors.
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

#ifndef VREXMIX_ERROR_HPP_
#define VREXMIX_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace vrexmix {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition (range, arity, sum-to-one).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The API was called in a way it does not support (e.g. backward on a
/// non-scalar root).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value showed up where a finite one was required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Tabular input has the wrong columns.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

}  // namespace vrexmix

#endif  // VREXMIX_ERROR_HPP_
