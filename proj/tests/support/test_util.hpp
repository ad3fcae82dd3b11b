#pragma once

#include <cstdint>
#include <string>

#include "warpfuse/core/types.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::testutil {

// Seeded noise smoothed by a few box blurs and stretched to [0,1]: textured but
// smooth enough for correlation-driven optimization to have a usable basin.
FeatureMap make_texture(int h, int w, uint64_t seed);

// Binary blob mask: union of two seeded axis-aligned ellipses. Always contains
// both foreground and background pixels.
SaliencyMap make_blob_gt(int h, int w, uint64_t seed);

// Uniform random saliency map in [0,1].
SaliencyMap random_saliency(int h, int w, uint64_t seed);

// Seeded binary map (each pixel 1 with probability p).
SaliencyMap random_binary(int h, int w, uint64_t seed, double p = 0.5);

// Numerically inverts the forward spline with Newton iteration (finite-difference
// Jacobian): returns x with evaluate_tps(params, x) = y, starting from y itself.
// Intended for the moderate deformations the synthesizer produces.
Vec2 invert_tps(const tps::TpsParameters& params, Vec2 y);

// Creates (and on first use wipes) a per-test scratch directory under the build
// tree and returns its path with a trailing component appended.
std::string scratch_dir(const std::string& name);
std::string scratch_path(const std::string& dir, const std::string& file);

// Whole-file read; throws on failure so tests fail loudly.
std::string slurp(const std::string& path);
void spew(const std::string& path, const std::string& content);

}  // namespace warpfuse::testutil
