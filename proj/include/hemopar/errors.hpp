#pragma once

#include <stdexcept>
#include <string>

namespace hemopar {

// Error families map onto the CLI exit codes.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class ExitCode : int { ok = 0, usage = 1, config = 2, data = 3, numerical = 4 };

}  // namespace hemopar
