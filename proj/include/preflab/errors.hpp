#pragma once

#include <stdexcept>
#include <string>

namespace preflab {

// Invalid ids, empty inputs, out-of-range arguments.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Inconsistent or malformed experiment configuration (unknown keys, missing
// handles, mode mismatches).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset construction failures (resampling cap, support violations).
struct ConstructionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Instance exceeds an enumeration or capacity bound.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A statistic whose denominator is empty (e.g. accuracy with all pairs tied).
struct UndefinedStatisticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace preflab
