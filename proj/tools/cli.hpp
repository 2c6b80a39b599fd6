#pragma once

#include <iosfwd>

namespace tetfit::cli
{
    // Exit codes.
    constexpr int kOk        = 0;
    constexpr int kFailure   = 1;  // numerical or geometric failure (diverged, no surface, ...)
    constexpr int kUsage     = 2;  // bad arguments, config or input contents
    constexpr int kIoFailure = 3;  // unreadable input or unwritable output

    /// Runs the `tetfit` command line; messages go to `out` and `err`.
    int run(int argc, const char * const * argv, std::ostream & out, std::ostream & err);
}
