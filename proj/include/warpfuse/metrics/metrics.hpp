#pragma once

#include "warpfuse/core/types.hpp"

namespace warpfuse::metrics {

// All three measures take a prediction in [0,1] and a strictly binary ground
// truth (every value exactly 0 or 1) of the same shape. Denominator guards use
// eps = 1e-8. A prediction equal to its ground truth scores 1 on each measure.

// Threshold used by the F and E measures: min(2 * mean(pred), 1 - eps);
// a pixel counts as foreground when pred > threshold.
double adaptive_threshold(const SaliencyMap& pred);

// Precision/recall harmonic blend with beta^2 = 0.3 at the adaptive threshold.
// Conventions: P + R == 0 scores 0; an all-background gt scores 1 against an
// all-background binarized prediction and 0 otherwise.
double f_measure(const SaliencyMap& pred, const SaliencyMap& gt);

// Structure measure: 0.5 * object term + 0.5 * region term. The object term
// blends foreground/background mean-similarity scores; the region term splits
// both maps into four blocks at the gt centroid and averages a per-block SSIM
// weighted by block area. Degenerate gt: all-zero scores 1 - mean(pred),
// all-one scores mean(pred). Result clamped to [0,1].
double s_measure(const SaliencyMap& pred, const SaliencyMap& gt);

// Alignment measure on the binarized prediction: with bias matrices
// phi_p = pred_bin - mean(pred_bin) and phi_g = gt - mean(gt),
//   xi = 2 * phi_p * phi_g / (phi_p^2 + phi_g^2 + eps),  E = mean((xi+1)^2 / 4).
// Degenerate gt: all-zero scores 1 - mean(pred_bin), all-one scores mean(pred_bin).
double e_measure(const SaliencyMap& pred, const SaliencyMap& gt);

struct MetricReport {
    double f = 0.0;
    double s = 0.0;
    double e = 0.0;
};

MetricReport evaluate_pair(const SaliencyMap& pred, const SaliencyMap& gt);

}  // namespace warpfuse::metrics
