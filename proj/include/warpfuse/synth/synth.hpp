#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "warpfuse/core/types.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::synth {

enum class PerturbClass { kWeak, kStrong };

// Sampled misalignment: a similarity transform (rotation theta, isotropic scale,
// translation in normalized units) plus optional per-control-point residual
// displacements. Class bounds:
//   weak:   |theta| <= 10 deg, scale in [0.9, 1.1],  |t| <= 0.1,  |residual| <= 0.1
//   strong: |theta| <= 25 deg, scale in [0.7, 1.3],  |t| <= 0.25, |residual| <= 0.2
struct PerturbationSpec {
    PerturbClass cls = PerturbClass::kWeak;
    uint64_t seed = 0;
    double theta = 0.0;
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;
    std::array<double, 6> affine{1, 0, 0, 0, 1, 0};  // row-major 2x3 [a b tx; c d ty]
    std::vector<Vec2> tps_deltas;                    // one per grid point
    tps::ControlPointGrid grid;
};

// Uniform sampling within the class bounds; every sampled scalar is recorded.
PerturbationSpec sample_perturbation(uint64_t seed, PerturbClass cls,
                                     const tps::ControlPointGrid& grid);

// theta = 0, scale = 1, zero translation and residuals.
PerturbationSpec identity_perturbation(const tps::ControlPointGrid& grid);

// The affine map applied to a normalized point: A * p + t.
Vec2 apply_affine(const PerturbationSpec& spec, Vec2 p);

struct PerturbedPair {
    FeatureMap image;
    SaliencyMap gt;
    tps::TpsParameters params;  // the exact composed transform that was sampled from
};

// Composes the affine and residual displacements into one spline (targets
// A * p_i + t + delta_i), warps the image and ground truth with it, and
// re-binarizes the warped ground truth at 0.5. The returned parameters evaluate
// to the composed transform exactly at the control points.
PerturbedPair apply_perturbation(const FeatureMap& img, const SaliencyMap& gt,
                                 const PerturbationSpec& spec);

// spec.json payload: class, seed, sampled scalars, affine, residuals, grid, and
// the composed spline parameters.
std::string serialize_spec(const PerturbationSpec& spec, const tps::TpsParameters& params);

}  // namespace warpfuse::synth
