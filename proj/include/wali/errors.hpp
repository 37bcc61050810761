// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace wali {

// Bad user-facing configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / format trouble (CLI exit code 3).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A verification command found a real numerical failure (CLI exit code 1).
class VerificationFailure : public std::runtime_error {
 public:
  explicit VerificationFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wali
