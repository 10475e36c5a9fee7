#pragma once

#include <stdexcept>
#include <string>

namespace tweezerlab {

// Invalid user input: bad config key, schema violation, malformed file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation that ran but could not produce a trustworthy result
// (fit non-convergence, quadrature that failed to converge, ...).
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tweezerlab
