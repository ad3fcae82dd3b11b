#include "warpfuse/tps/warp.hpp"

#include <cmath>

namespace warpfuse::tps {

namespace {

constexpr double kSnapTol = 1.0e-6;  // pixels

void validate_image(const FeatureMap& img) {
    if (img.empty()) throw std::invalid_argument("warp: empty image");
    if (img.height() < 2 || img.width() < 2) {
        throw std::invalid_argument("warp: image must be at least 2x2");
    }
}

}  // namespace

Vec2 pixel_to_norm(int x, int y, int w, int h) {
    return {2.0 * x / (w - 1) - 1.0, 2.0 * y / (h - 1) - 1.0};
}

Vec2 norm_to_pixel(Vec2 n, int w, int h) {
    return {(n.x + 1.0) * 0.5 * (w - 1), (n.y + 1.0) * 0.5 * (h - 1)};
}

WarpField make_warp_field(const TpsParameters& params, int width, int height) {
    if (width < 2 || height < 2) {
        throw std::invalid_argument("make_warp_field: size must be at least 2x2");
    }
    WarpField field;
    field.width = width;
    field.height = height;
    field.map.resize(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            field.map[static_cast<size_t>(y) * width + x] =
                evaluate_tps(params, pixel_to_norm(x, y, width, height));
        }
    }
    return field;
}

FeatureMap sample_bilinear(const FeatureMap& img, const WarpField& field,
                           std::vector<uint8_t>* in_bounds) {
    validate_image(img);
    if (field.width <= 0 || field.height <= 0 ||
        field.map.size() != static_cast<size_t>(field.width) * field.height) {
        throw std::invalid_argument("sample_bilinear: malformed warp field");
    }

    const int w = img.width();
    const int h = img.height();
    const int c = img.channels();
    FeatureMap out(field.height, field.width, c, 0.0);
    if (in_bounds) in_bounds->assign(field.map.size(), 0);

    for (int y = 0; y < field.height; ++y) {
        for (int x = 0; x < field.width; ++x) {
            const Vec2 src = norm_to_pixel(field.at(y, x), w, h);
            double sx = src.x;
            double sy = src.y;
            if (sx < -kSnapTol || sx > w - 1 + kSnapTol || sy < -kSnapTol ||
                sy > h - 1 + kSnapTol) {
                continue;  // zero padding
            }
            if (in_bounds) (*in_bounds)[static_cast<size_t>(y) * field.width + x] = 1;

            sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
            sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            double fx = sx - x0;
            double fy = sy - y0;
            if (fx < kSnapTol) {
                fx = 0.0;
            } else if (fx > 1.0 - kSnapTol) {
                ++x0;
                fx = 0.0;
            }
            if (fy < kSnapTol) {
                fy = 0.0;
            } else if (fy > 1.0 - kSnapTol) {
                ++y0;
                fy = 0.0;
            }
            x0 = std::min(x0, w - 1);
            y0 = std::min(y0, h - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);

            if (fx == 0.0 && fy == 0.0) {
                for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = img.at(y0, x0, ch);
                continue;
            }
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = img.at(y0, x0, ch);
                const double v01 = img.at(y0, x1, ch);
                const double v10 = img.at(y1, x0, ch);
                const double v11 = img.at(y1, x1, ch);
                out.at(y, x, ch) = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                                   fy * ((1.0 - fx) * v10 + fx * v11);
            }
        }
    }
    return out;
}

FeatureMap warp_image(const FeatureMap& img, const TpsParameters& params) {
    validate_image(img);
    return sample_bilinear(img, make_warp_field(params, img.width(), img.height()));
}

}  // namespace warpfuse::tps
