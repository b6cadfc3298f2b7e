#pragma once

#include <stdexcept>
#include <string>

namespace pgembed {

/// Bad arguments or malformed data (maps to CLI exit code 2).
struct invalid_input : std::runtime_error {
  explicit invalid_input(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / format failures (maps to CLI exit code 3).
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical breakdown: singular constraints, non-PD systems, divergence
/// (maps to CLI exit code 4).
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pgembed
