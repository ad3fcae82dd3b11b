#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "ref_metrics.hpp"
#include "test_util.hpp"
#include "warpfuse/metrics/metrics.hpp"

using namespace warpfuse;
using namespace warpfuse::metrics;

namespace {

SaliencyMap inverted(const SaliencyMap& m) {
    SaliencyMap out = m;
    for (double& v : out.values) v = 1.0 - v;
    return out;
}

}  // namespace

TEST_CASE("adaptive threshold doubles the mean and saturates below one") {
    SaliencyMap pred(2, 2);
    pred.values = {0.1, 0.2, 0.3, 0.4};  // mean 0.25
    CHECK(adaptive_threshold(pred) == doctest::Approx(0.5).epsilon(1e-12));
    SaliencyMap bright(2, 2, 0.9);
    CHECK(adaptive_threshold(bright) == doctest::Approx(1.0 - 1e-8).epsilon(1e-12));
}

TEST_CASE("a prediction equal to its ground truth scores one everywhere") {
    for (uint64_t seed : {3u, 11u, 42u}) {
        const SaliencyMap gt = testutil::make_blob_gt(24, 32, seed);
        CHECK(f_measure(gt, gt) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(s_measure(gt, gt) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(e_measure(gt, gt) == doctest::Approx(1.0).epsilon(1e-6));
        const MetricReport r = evaluate_pair(gt, gt);
        CHECK(r.f == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(r.s == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(r.e == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("an all-one prediction against a partial gt has a closed form") {
    // Threshold saturates below 1, so every pixel binarizes to foreground:
    // precision k/n, recall 1, F = 1.3 * (k/n) / (0.3 * (k/n) + 1).
    SaliencyMap pred(4, 4, 1.0);
    SaliencyMap gt(4, 4, 0.0);
    gt.at(1, 1) = 1.0;
    gt.at(2, 2) = 1.0;
    gt.at(3, 0) = 1.0;
    gt.at(0, 3) = 1.0;  // k = 4, n = 16
    const double p = 4.0 / 16.0;
    const double want = 1.3 * p / (0.3 * p + 1.0);
    CHECK(f_measure(pred, gt) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("a complemented prediction scores zero on the F measure") {
    const SaliencyMap gt = testutil::make_blob_gt(16, 16, 5);
    const SaliencyMap pred = inverted(gt);
    // Binarized at min(2 * mean, ...) the complement hits zero true positives.
    CHECK(f_measure(pred, gt) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("degenerate ground truths fall back to mean-based scores") {
    SaliencyMap pred(6, 6);
    for (size_t i = 0; i < pred.values.size(); ++i) pred.values[i] = (i % 5) / 8.0;
    double mean = 0.0;
    for (double v : pred.values) mean += v;
    mean /= static_cast<double>(pred.values.size());

    const SaliencyMap zeros(6, 6, 0.0);
    const SaliencyMap ones(6, 6, 1.0);
    CHECK(s_measure(pred, zeros) == doctest::Approx(1.0 - mean).epsilon(1e-12));
    CHECK(s_measure(pred, ones) == doctest::Approx(mean).epsilon(1e-12));

    // The E measure uses the binarized prediction in its fallback.
    const double thr = adaptive_threshold(pred);
    double bin_mean = 0.0;
    for (double v : pred.values) bin_mean += (v > thr) ? 1.0 : 0.0;
    bin_mean /= static_cast<double>(pred.values.size());
    CHECK(e_measure(pred, zeros) == doctest::Approx(1.0 - bin_mean).epsilon(1e-12));
    CHECK(e_measure(pred, ones) == doctest::Approx(bin_mean).epsilon(1e-12));

    // An empty gt with an empty binarized prediction is a perfect F score.
    CHECK(f_measure(zeros, zeros) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f_measure(pred, zeros) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("anti-aligned binary maps drive the alignment measure to zero") {
    SaliencyMap pred(2, 2);
    pred.values = {1.0, 0.0, 1.0, 0.0};
    SaliencyMap gt(2, 2);
    gt.values = {0.0, 1.0, 0.0, 1.0};
    // Bias matrices are exact opposites, xi = -1, so every term vanishes.
    CHECK(e_measure(pred, gt) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("the F and E measures see through halving the prediction") {
    const SaliencyMap gt = testutil::make_blob_gt(16, 16, 9);
    SaliencyMap pred = testutil::random_saliency(16, 16, 10);
    // Keep 2 * mean clear of the saturation cap so both maps threshold
    // proportionally; halving is exact in binary floating point, so the
    // binarizations (and with them F and E) cannot move.
    for (double& v : pred.values) v *= 0.75;
    SaliencyMap scaled = pred;
    for (double& v : scaled.values) v *= 0.5;
    CHECK(f_measure(scaled, gt) == doctest::Approx(f_measure(pred, gt)).epsilon(1e-12));
    CHECK(e_measure(scaled, gt) == doctest::Approx(e_measure(pred, gt)).epsilon(1e-12));
}

TEST_CASE("non-binary ground truths are rejected") {
    SaliencyMap pred(4, 4, 0.5);
    SaliencyMap gt(4, 4, 0.0);
    gt.at(0, 0) = 0.25;
    CHECK_THROWS_AS(f_measure(pred, gt), std::invalid_argument);
    CHECK_THROWS_AS(s_measure(pred, gt), std::invalid_argument);
    CHECK_THROWS_AS(e_measure(pred, gt), std::invalid_argument);
}

TEST_CASE("mismatched shapes are rejected") {
    SaliencyMap pred(4, 4, 0.5);
    SaliencyMap gt(4, 5, 0.0);
    CHECK_THROWS_AS(f_measure(pred, gt), std::invalid_argument);
    CHECK_THROWS_AS(s_measure(pred, gt), std::invalid_argument);
    CHECK_THROWS_AS(e_measure(pred, gt), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_pair(pred, gt), std::invalid_argument);
}

TEST_CASE("random maps agree with the reference scorers") {
    int nontrivial = 0;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        // Squaring skews the values toward zero so the adaptive threshold
        // (twice the mean) lands inside the distribution instead of at its top,
        // the way it does for real, sparse saliency maps.
        SaliencyMap pred = testutil::random_saliency(8, 8, 1000 + seed);
        for (double& v : pred.values) v *= v;
        const SaliencyMap gt = testutil::random_binary(8, 8, 2000 + seed, 0.35);
        CAPTURE(seed);
        const double f = f_measure(pred, gt);
        const double s = s_measure(pred, gt);
        const double e = e_measure(pred, gt);
        CHECK(f == doctest::Approx(testutil::ref_f_measure(pred, gt)).epsilon(1e-6));
        CHECK(s == doctest::Approx(testutil::ref_s_measure(pred, gt)).epsilon(1e-6));
        CHECK(e == doctest::Approx(testutil::ref_e_measure(pred, gt)).epsilon(1e-6));
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
        if (f > 1e-9 && f < 1.0 - 1e-9) ++nontrivial;
    }
    CHECK(nontrivial > 100);  // the corpus exercises interior scores, not just edges
}

TEST_CASE("structure measure prefers the matching layout") {
    const SaliencyMap gt = testutil::make_blob_gt(24, 24, 21);
    SaliencyMap close = gt;
    for (size_t i = 0; i < close.values.size(); ++i) {
        close.values[i] = 0.9 * close.values[i] + 0.05;
    }
    const SaliencyMap noise = testutil::random_saliency(24, 24, 22);
    CHECK(s_measure(close, gt) > s_measure(noise, gt));
    CHECK(evaluate_pair(close, gt).s == doctest::Approx(s_measure(close, gt)).epsilon(1e-12));
}
