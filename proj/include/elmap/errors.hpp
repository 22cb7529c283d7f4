#pragma once

#include <stdexcept>

namespace elmap {

/// Missing or malformed input data (bad bundle, cloud, config file). The CLI
/// maps this to exit code 1, other runtime errors to 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace elmap
