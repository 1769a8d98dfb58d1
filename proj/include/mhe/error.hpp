// Copyright 2026 The MHE-SDC Authors
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
#include <string_view>

namespace mhe {

// Values of the first four are the CLI exit codes; the CLI maps
// kInvalidArgument onto the config exit code.
enum class ErrorKind : int {
  kConfig = 2,
  kIo = 3,
  kDivergence = 4,
  kCheckFailure = 5,
  kInvalidArgument = 6,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Shape or value contract violated by the caller.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorKind::kInvalidArgument, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorKind::kConfig, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorKind::kIo, message) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& message)
      : Error(ErrorKind::kDivergence, message) {}
};

class CheckFailure : public Error {
 public:
  explicit CheckFailure(const std::string& message)
      : Error(ErrorKind::kCheckFailure, message) {}
};

}  // namespace mhe
