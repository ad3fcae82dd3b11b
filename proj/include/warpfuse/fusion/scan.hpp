#pragma once

#include <vector>

#include "warpfuse/core/rng.hpp"
#include "warpfuse/core/types.hpp"

namespace warpfuse::fusion {

// Per-channel diagonal linear state-space recurrence:
//   h_t = a (.) h_{t-1} + b (.) x_t[c],   y_t[c] = sum_s c[c][s] * h_t[c][s]
// with h_0 = 0. Decay coefficients must lie in [0, 1); values >= 1 are rejected
// as unstable. The seeded initializer draws a from (0.5, 0.99) and b, c from
// U(-1/sqrt(state_dim), 1/sqrt(state_dim)).
struct ScanParams {
    int channels = 0;
    int state_dim = 0;
    std::vector<double> a;  // channels * state_dim
    std::vector<double> b;
    std::vector<double> c;

    static ScanParams make(int channels, int state_dim, Rng& rng);
    static ScanParams zeros(int channels, int state_dim);
    void collect(std::vector<double*>& out);
};

void validate_scan_params(const ScanParams& p);

// Reference implementation: the naive sequential recurrence. x is a t_len x
// channels row-major sequence; the result has the same layout.
std::vector<double> selective_scan(const std::vector<double>& x, int t_len, const ScanParams& p);

// Block-summary variant: per-block transition summaries are combined to place
// the entry states, then blocks are replayed locally. Agrees with the naive
// recurrence to floating-point roundoff and is the path the 2-D scans use.
std::vector<double> selective_scan_blocked(const std::vector<double>& x, int t_len,
                                           const ScanParams& p);

// Backprop-through-time for the recurrence. Accumulates into gx / gp.
void selective_scan_backward(const std::vector<double>& x, int t_len, const ScanParams& p,
                             const std::vector<double>& gy, std::vector<double>* gx,
                             ScanParams* gp);

// Even-sized input split by stride 2 into 4 sub-grids, each flattened row-major,
// scanned forward and reversed (outputs averaged), then re-interleaved.
FeatureMap es2d(const FeatureMap& x, const ScanParams& p);
void es2d_backward(const FeatureMap& x, const ScanParams& p, const FeatureMap& gy, FeatureMap* gx,
                   ScanParams* gp);

// Windowed scan: raster scan inside each win x win window plus a scan over the
// sequence of window means of the input, broadcast back onto the windows.
// Requires both sides divisible by win.
FeatureMap lssm(const FeatureMap& x, const ScanParams& p, int win);
void lssm_backward(const FeatureMap& x, const ScanParams& p, int win, const FeatureMap& gy,
                   FeatureMap* gx, ScanParams* gp);

}  // namespace warpfuse::fusion
