#pragma once

#include <vector>

#include "warpfuse/core/types.hpp"

namespace warpfuse::fusion {

// Training losses over a [0,1] prediction and a strictly binary target of the
// same shape. bce clamps the prediction to [1e-7, 1 - 1e-7] before the logs, so
// hard 0/1 predictions stay finite. dice uses additive smoothing of 1 in both
// numerator and denominator. smoothness is the mean absolute forward difference
// of the prediction weighted by exp(-|forward difference of the target|),
// accumulated separately along x and y and summed.
double bce_loss(const SaliencyMap& pred, const SaliencyMap& gt);
double dice_loss(const SaliencyMap& pred, const SaliencyMap& gt);
double smoothness_loss(const SaliencyMap& pred, const SaliencyMap& gt);

// Unit-weight sum of the three terms.
double loss_total(const SaliencyMap& pred, const SaliencyMap& gt);

// d loss_total / d pred, accumulated into gpred (size h*w, row-major). At
// clamped bce pixels and at zero differences the subgradient 0 is used.
void loss_total_grad(const SaliencyMap& pred, const SaliencyMap& gt, std::vector<double>* gpred);

}  // namespace warpfuse::fusion
