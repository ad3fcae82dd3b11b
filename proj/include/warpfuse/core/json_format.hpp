#pragma once

#include <string>

namespace warpfuse {

// Renders a finite double with 17 significant digits ("%.17g"), enough to round-trip
// any IEEE-754 binary64 value. Throws std::invalid_argument on NaN/Inf.
std::string format_double(double v);

}  // namespace warpfuse
