#pragma once

#include <cstdint>
#include <vector>

#include "warpfuse/core/types.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::tps {

// Dense backward map: one normalized source coordinate per target pixel.
struct WarpField {
    int width = 0;
    int height = 0;
    std::vector<Vec2> map;  // row-major, height * width entries

    Vec2 at(int y, int x) const { return map[static_cast<size_t>(y) * width + x]; }
};

// Align-corners pixel <-> normalized mapping: pixel (0,0) is (-1,-1) and
// (w-1, h-1) is (1,1). Requires w, h >= 2.
Vec2 pixel_to_norm(int x, int y, int w, int h);
Vec2 norm_to_pixel(Vec2 n, int w, int h);

// Evaluates the spline at every target pixel's normalized coordinate.
WarpField make_warp_field(const TpsParameters& params, int width, int height);

// Bilinear sampling with zero padding. A sample whose source coordinate leaves
// the image rectangle (beyond a 1e-6-pixel snap tolerance) yields 0; the snap
// also makes exact-lattice source coordinates reproduce pixels bit-exactly.
// in_bounds, when non-null, receives one flag per target pixel.
FeatureMap sample_bilinear(const FeatureMap& img, const WarpField& field,
                           std::vector<uint8_t>* in_bounds = nullptr);

// make_warp_field + sample_bilinear at the image's own size.
FeatureMap warp_image(const FeatureMap& img, const TpsParameters& params);

}  // namespace warpfuse::tps
