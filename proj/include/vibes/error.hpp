#pragma once

#include <stdexcept>
#include <string>

namespace vibes {

/// Bad input data: malformed files, violated invariants, missing entries.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown names, inconsistent options.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace vibes
