#include "warpfuse/fusion/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace warpfuse::fusion {

namespace {

constexpr double kClamp = 1e-7;

void validate(const SaliencyMap& pred, const SaliencyMap& gt) {
    if (pred.height <= 0 || pred.width <= 0 || pred.height != gt.height ||
        pred.width != gt.width) {
        throw std::invalid_argument("loss: prediction and target must share a non-empty shape");
    }
    for (double v : pred.values) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("loss: prediction values must lie in [0,1]");
        }
    }
    for (double v : gt.values) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("loss: target must be binary");
    }
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double bce_loss(const SaliencyMap& pred, const SaliencyMap& gt) {
    validate(pred, gt);
    double acc = 0.0;
    size_t n = pred.values.size();
    for (size_t i = 0; i < n; ++i) {
        double p = std::min(1.0 - kClamp, std::max(kClamp, pred.values[i]));
        double g = gt.values[i];
        acc -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(n);
}

double dice_loss(const SaliencyMap& pred, const SaliencyMap& gt) {
    validate(pred, gt);
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        inter += pred.values[i] * gt.values[i];
        sp += pred.values[i];
        sg += gt.values[i];
    }
    return 1.0 - (2.0 * inter + 1.0) / (sp + sg + 1.0);
}

double smoothness_loss(const SaliencyMap& pred, const SaliencyMap& gt) {
    validate(pred, gt);
    int h = pred.height, w = pred.width;
    auto at = [&](const SaliencyMap& m, int y, int x) {
        return m.values[static_cast<size_t>(y) * w + x];
    };
    double sx = 0.0, sy = 0.0;
    if (w > 1) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x + 1 < w; ++x) {
                sx += std::abs(at(pred, y, x + 1) - at(pred, y, x)) *
                      std::exp(-std::abs(at(gt, y, x + 1) - at(gt, y, x)));
            }
        }
        sx /= static_cast<double>(h) * (w - 1);
    }
    if (h > 1) {
        for (int y = 0; y + 1 < h; ++y) {
            for (int x = 0; x < w; ++x) {
                sy += std::abs(at(pred, y + 1, x) - at(pred, y, x)) *
                      std::exp(-std::abs(at(gt, y + 1, x) - at(gt, y, x)));
            }
        }
        sy /= static_cast<double>(h - 1) * w;
    }
    return sx + sy;
}

double loss_total(const SaliencyMap& pred, const SaliencyMap& gt) {
    return bce_loss(pred, gt) + dice_loss(pred, gt) + smoothness_loss(pred, gt);
}

void loss_total_grad(const SaliencyMap& pred, const SaliencyMap& gt, std::vector<double>* gpred) {
    validate(pred, gt);
    size_t n = pred.values.size();
    if (gpred->size() != n) throw std::invalid_argument("loss_total_grad: gradient size mismatch");

    double inv_n = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
        double p = pred.values[i];
        if (p > kClamp && p < 1.0 - kClamp) {
            (*gpred)[i] += (-gt.values[i] / p + (1.0 - gt.values[i]) / (1.0 - p)) * inv_n;
        }
    }

    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (size_t i = 0; i < n; ++i) {
        inter += pred.values[i] * gt.values[i];
        sp += pred.values[i];
        sg += gt.values[i];
    }
    double num = 2.0 * inter + 1.0;
    double den = sp + sg + 1.0;
    for (size_t i = 0; i < n; ++i) {
        (*gpred)[i] += -2.0 * gt.values[i] / den + num / (den * den);
    }

    int h = pred.height, w = pred.width;
    auto at = [&](const SaliencyMap& m, int y, int x) {
        return m.values[static_cast<size_t>(y) * w + x];
    };
    auto idx = [&](int y, int x) { return static_cast<size_t>(y) * w + x; };
    if (w > 1) {
        double norm = 1.0 / (static_cast<double>(h) * (w - 1));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x + 1 < w; ++x) {
                double s = sgn(at(pred, y, x + 1) - at(pred, y, x)) *
                           std::exp(-std::abs(at(gt, y, x + 1) - at(gt, y, x))) * norm;
                (*gpred)[idx(y, x + 1)] += s;
                (*gpred)[idx(y, x)] -= s;
            }
        }
    }
    if (h > 1) {
        double norm = 1.0 / (static_cast<double>(h - 1) * w);
        for (int y = 0; y + 1 < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = sgn(at(pred, y + 1, x) - at(pred, y, x)) *
                           std::exp(-std::abs(at(gt, y + 1, x) - at(gt, y, x))) * norm;
                (*gpred)[idx(y + 1, x)] += s;
                (*gpred)[idx(y, x)] -= s;
            }
        }
    }
}

}  // namespace warpfuse::fusion
