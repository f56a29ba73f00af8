// Copyright 2026 The TransOpt Authors.
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

#ifndef TRANSOPT_ERROR_H_
#define TRANSOPT_ERROR_H_

#include <stdexcept>
#include <string>

namespace transopt {

// Exception hierarchy. The category decides the CLI exit code:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed input text. `line` is 1-based, 0 when the problem is structural
// (e.g. a missing metadata header).
class ParseError : public DataError {
 public:
  ParseError(int line, const std::string& message)
      : DataError(line > 0 ? "line " + std::to_string(line) + ": " + message
                           : message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace transopt

#endif  // TRANSOPT_ERROR_H_
