#include "warpfuse/core/json_format.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace warpfuse {

std::string format_double(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("format_double: non-finite value");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace warpfuse
