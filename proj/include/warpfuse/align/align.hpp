#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "warpfuse/core/types.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::align {

// Per-control-point displacement field in normalized units.
struct Displacements {
    tps::ControlPointGrid grid;
    std::vector<Vec2> deltas;
};

std::string serialize_displacements(const Displacements& d);
Displacements parse_displacements(const std::string& json_text);

struct AlignConfig {
    double max_disp = 0.5;     // per-component displacement clamp
    double lambda_bend = 0.0;  // roughness penalty weight
    double step0 = 0.16;       // initial coordinate step, normalized units
    int max_iters = 40;        // sweep budget per pyramid level
    double tol = 1.0e-4;       // relative objective decrease to keep sweeping
    uint64_t seed = 0;
};

// Zero-mean normalized cross-correlation over the masked pixels of all channels.
// Returns 0 when either masked signal has (numerically) zero variance.
double ncc(const FeatureMap& a, const FeatureMap& b, const std::vector<uint8_t>& mask);

// (1 - NCC(ref, warp(mov))) + lambda_bend * bending_energy, where the warp is the
// spline interpolating grid -> grid + deltas and NCC runs over the in-bounds
// overlap. When the overlap covers less than 10% of the pixels the objective is
// 2 + (0.1 - overlap_fraction) instead; lower is better throughout.
double alignment_objective(const FeatureMap& ref, const FeatureMap& mov, const Displacements& d,
                           double lambda_bend);

struct AlignResult {
    Displacements displacements;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::vector<double> accepted_objectives;  // non-increasing by construction
};

// Derivative-free coordinate descent over the 2N displacement components with
// per-coordinate step halving, coarse-to-fine over a 3-level factor-2 pyramid.
// Deterministic for a fixed seed; returns zero displacements when nothing
// improves the objective.
AlignResult optimize_displacements(const FeatureMap& ref, const FeatureMap& mov,
                                   const tps::ControlPointGrid& grid, const AlignConfig& cfg);

// 2x box downsampling, truncating odd edges. Exposed for tests.
FeatureMap downsample2(const FeatureMap& img);

}  // namespace warpfuse::align
