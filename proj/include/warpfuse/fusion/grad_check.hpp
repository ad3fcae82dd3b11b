#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace warpfuse::fusion {

struct GradCheckReport {
    std::string block;
    int param_count = 0;    // total trainable scalars in the block
    int checked = 0;        // how many were probed (at most 200, seeded sample)
    double max_rel_error = 0.0;
};

// Known block names, in report order.
const std::vector<std::string>& grad_check_blocks();

// Builds a seeded instance of the named block plus a seeded input, compares the
// analytic parameter gradients of the probe loss sum(outputs) against central
// differences (h = 1e-4), and reports the worst relative error
// |a - n| / max(|a|, |n|, 1e-6). Unknown names raise std::invalid_argument.
GradCheckReport grad_check(const std::string& block, uint64_t seed);

}  // namespace warpfuse::fusion
