#pragma once

#include <stdexcept>
#include <string>

namespace collapsim {

// Invalid configuration text or invalid field values (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range argument handed to a physics operation (CLI exit code 2).
class DomainError : public ConfigError {
 public:
  explicit DomainError(const std::string& msg) : ConfigError(msg) {}
};

// Numerical failure: quadrature non-convergence, singular fit, empty
// estimate (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem or serialization failure (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace collapsim
