#include "warpfuse/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace warpfuse::metrics {

namespace {

constexpr double kEps = 1.0e-8;
constexpr double kBeta2 = 0.3;

void validate(const SaliencyMap& pred, const SaliencyMap& gt) {
    if (pred.height <= 0 || pred.width <= 0) throw std::invalid_argument("metrics: empty map");
    if (pred.height != gt.height || pred.width != gt.width) {
        throw std::invalid_argument("metrics: shape mismatch");
    }
    for (double v : pred.values) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("metrics: prediction outside [0,1]");
        }
    }
    for (double v : gt.values) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("metrics: gt must be binary");
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::vector<double> binarize(const SaliencyMap& pred) {
    const double thr = adaptive_threshold(pred);
    std::vector<double> out(pred.values.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = pred.values[i] > thr ? 1.0 : 0.0;
    return out;
}

// Mean-similarity score of one side of the object term: 2*m / (m^2 + 1 + sd + eps)
// over the masked values, with the population standard deviation.
double object_score(const std::vector<double>& vals) {
    if (vals.empty()) return 0.0;
    const double m = mean_of(vals);
    double var = 0.0;
    for (double v : vals) var += (v - m) * (v - m);
    var /= static_cast<double>(vals.size());
    return 2.0 * m / (m * m + 1.0 + std::sqrt(var) + kEps);
}

// Per-block SSIM of the region term. Variances use the n-1 normalization; a
// single-pixel block has zero variance by convention.
double region_ssim(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    if (n == 0) return 0.0;
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    if (n > 1) {
        for (size_t i = 0; i < n; ++i) {
            vx += (x[i] - mx) * (x[i] - mx);
            vy += (y[i] - my) * (y[i] - my);
            cxy += (x[i] - mx) * (y[i] - my);
        }
        vx /= static_cast<double>(n - 1);
        vy /= static_cast<double>(n - 1);
        cxy /= static_cast<double>(n - 1);
    }
    // Exact division: a != 0 forces mx, my, cxy nonzero, and vx + vy >=
    // 2|cxy| > 0 by Cauchy-Schwarz, so b > 0. Regularizing here would bleed
    // measurable error into sparse blocks, breaking the pred == gt identity.
    const double a = 4.0 * mx * my * cxy;
    const double b = (mx * mx + my * my) * (vx + vy);
    if (a != 0.0) return a / b;
    if (b == 0.0) return 1.0;
    return 0.0;
}

}  // namespace

double adaptive_threshold(const SaliencyMap& pred) {
    return std::min(2.0 * mean_of(pred.values), 1.0 - kEps);
}

double f_measure(const SaliencyMap& pred, const SaliencyMap& gt) {
    validate(pred, gt);
    const std::vector<double> pb = binarize(pred);

    size_t tp = 0, pred_fg = 0, gt_fg = 0;
    for (size_t i = 0; i < pb.size(); ++i) {
        const bool p = pb[i] > 0.5;
        const bool g = gt.values[i] > 0.5;
        tp += p && g;
        pred_fg += p;
        gt_fg += g;
    }
    if (gt_fg == 0) return pred_fg == 0 ? 1.0 : 0.0;

    const double precision = pred_fg > 0 ? static_cast<double>(tp) / pred_fg : 0.0;
    const double recall = static_cast<double>(tp) / gt_fg;
    if (precision + recall == 0.0) return 0.0;
    return (1.0 + kBeta2) * precision * recall / (kBeta2 * precision + recall);
}

double s_measure(const SaliencyMap& pred, const SaliencyMap& gt) {
    validate(pred, gt);
    const double y = mean_of(gt.values);
    if (y == 0.0) return std::clamp(1.0 - mean_of(pred.values), 0.0, 1.0);
    if (y == 1.0) return std::clamp(mean_of(pred.values), 0.0, 1.0);

    // Object term: foreground uses pred where gt is set, background uses the
    // complement of pred where gt is clear, blended by the foreground fraction.
    std::vector<double> fg, bg;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        if (gt.values[i] > 0.5) {
            fg.push_back(pred.values[i]);
        } else {
            bg.push_back(1.0 - pred.values[i]);
        }
    }
    const double s_object = y * object_score(fg) + (1.0 - y) * object_score(bg);

    // Region term: 4-way split at the gt centroid (rounded to pixel indices,
    // split boundary one past the centroid so the centroid pixel stays in the
    // top-left block).
    const int h = gt.height;
    const int w = gt.width;
    double area = 0.0, sx = 0.0, sy = 0.0;
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            const double g = gt.at(yy, xx);
            area += g;
            sx += g * xx;
            sy += g * yy;
        }
    }
    const int cx = static_cast<int>(std::floor(sx / area + 0.5));
    const int cy = static_cast<int>(std::floor(sy / area + 0.5));
    const int bx = cx + 1;
    const int by = cy + 1;

    double s_region = 0.0;
    const double total = static_cast<double>(h) * w;
    for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
            const int x0 = qx == 0 ? 0 : bx;
            const int x1 = qx == 0 ? bx : w;
            const int y0 = qy == 0 ? 0 : by;
            const int y1 = qy == 0 ? by : h;
            if (x0 >= x1 || y0 >= y1) continue;
            std::vector<double> px, gx;
            px.reserve(static_cast<size_t>(x1 - x0) * (y1 - y0));
            gx.reserve(px.capacity());
            for (int yy = y0; yy < y1; ++yy) {
                for (int xx = x0; xx < x1; ++xx) {
                    px.push_back(pred.at(yy, xx));
                    gx.push_back(gt.at(yy, xx));
                }
            }
            const double weight = static_cast<double>(px.size()) / total;
            s_region += weight * region_ssim(px, gx);
        }
    }

    return std::clamp(0.5 * s_object + 0.5 * s_region, 0.0, 1.0);
}

double e_measure(const SaliencyMap& pred, const SaliencyMap& gt) {
    validate(pred, gt);
    const std::vector<double> pb = binarize(pred);
    const double y = mean_of(gt.values);
    if (y == 0.0) return 1.0 - mean_of(pb);
    if (y == 1.0) return mean_of(pb);

    const double mp = mean_of(pb);
    double total = 0.0;
    for (size_t i = 0; i < pb.size(); ++i) {
        const double phi_p = pb[i] - mp;
        const double phi_g = gt.values[i] - y;
        const double xi = 2.0 * phi_p * phi_g / (phi_p * phi_p + phi_g * phi_g + kEps);
        total += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    return total / static_cast<double>(pb.size());
}

MetricReport evaluate_pair(const SaliencyMap& pred, const SaliencyMap& gt) {
    return {f_measure(pred, gt), s_measure(pred, gt), e_measure(pred, gt)};
}

}  // namespace warpfuse::metrics
