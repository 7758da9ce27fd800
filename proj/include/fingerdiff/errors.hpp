#pragma once

#include <stdexcept>
#include <string>

namespace fingerdiff {

// Error taxonomy mirrors the CLI exit categories: config | data | numeric | io.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fingerdiff
