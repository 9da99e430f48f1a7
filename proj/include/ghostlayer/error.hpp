#pragma once

#include <stdexcept>
#include <string>

namespace ghostlayer {

// Base of every error thrown by the library. The CLI maps the concrete
// type to an exit code (see exit_code_for).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes, unknown layer names, bad parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Command-line / config-file misuse.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, corrupt PNG, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed file in a variant we deliberately do not handle (e.g. 16-bit PNG).
class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A file that parses but does not match what the network expects.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered while optimizing.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kUsage = 2;
inline constexpr int kInput = 3;
inline constexpr int kNumeric = 4;
}  // namespace exit_code

inline int exit_code_for(const Error& e) {
  if (dynamic_cast<const NumericError*>(&e)) return exit_code::kNumeric;
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) {
    return exit_code::kUsage;
  }
  return exit_code::kInput;
}

}  // namespace ghostlayer
