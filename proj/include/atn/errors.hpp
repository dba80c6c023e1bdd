#pragma once

#include <stdexcept>
#include <string>

namespace atn {

/// Base class for errors caused by invalid user input (bad config files,
/// malformed matrices, violated preconditions). The CLI maps these to exit
/// code 2; everything else is a runtime failure (exit 1).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace atn
