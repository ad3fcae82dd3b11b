#include <cmath>
#include <vector>

#include "doctest.h"
#include "support/test_util.hpp"
#include "warpfuse/align/align.hpp"
#include "warpfuse/core/rng.hpp"
#include "warpfuse/tps/tps.hpp"
#include "warpfuse/tps/warp.hpp"

using namespace warpfuse;
using namespace warpfuse::align;

namespace {

// mov(y, x) = ref(y, x - px) with zero fill, an exact integer shift.
FeatureMap shift_right(const FeatureMap& ref, int px) {
    FeatureMap out(ref.height(), ref.width(), ref.channels(), 0.0);
    for (int y = 0; y < ref.height(); ++y) {
        for (int x = px; x < ref.width(); ++x) {
            for (int c = 0; c < ref.channels(); ++c) out.at(y, x, c) = ref.at(y, x - px, c);
        }
    }
    return out;
}

Displacements uniform_displacement(const tps::ControlPointGrid& g, Vec2 d) {
    Displacements out;
    out.grid = g;
    out.deltas.assign(g.points.size(), d);
    return out;
}

}  // namespace

TEST_CASE("masked correlation basics") {
    const FeatureMap a = testutil::make_texture(16, 16, 1);
    FeatureMap b = a;
    std::vector<uint8_t> mask(16 * 16, 1);
    CHECK(ncc(a, b, mask) == doctest::Approx(1.0).epsilon(1e-12));

    for (double& v : b.data()) v = 1.0 - v;  // anti-correlated
    CHECK(ncc(a, b, mask) == doctest::Approx(-1.0).epsilon(1e-12));

    const FeatureMap flat(16, 16, 1, 0.25);
    CHECK(ncc(a, flat, mask) == 0.0);  // zero variance convention

    std::vector<uint8_t> empty_mask(16 * 16, 0);
    CHECK(ncc(a, b, empty_mask) == 0.0);
}

TEST_CASE("objective conventions") {
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);
    const FeatureMap ref = testutil::make_texture(32, 32, 2);

    // Perfect self-match scores (1 - NCC) = 0.
    CHECK(alignment_objective(ref, ref, uniform_displacement(g, {0, 0}), 0.0) ==
          doctest::Approx(0.0).epsilon(1e-10));

    // Zero-variance signals: NCC defined as 0, objective exactly 1.
    const FeatureMap flat(16, 16, 1, 0.5);
    CHECK(alignment_objective(flat, flat, uniform_displacement(g, {0, 0}), 0.0) == 1.0);

    // A uniform displacement reproduces an exact translation; +2.5 in normalized
    // coordinates pushes even the (-1,-1) corner past +1, so no sample lands on
    // the image and the objective is the flat out-of-overlap penalty.
    CHECK(alignment_objective(ref, ref, uniform_displacement(g, {2.5, 2.5}), 0.0) ==
          doctest::Approx(2.1).epsilon(1e-12));

    const FeatureMap other(16, 16, 1, 0.0);
    CHECK_THROWS_AS(alignment_objective(ref, other, uniform_displacement(g, {0, 0}), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(alignment_objective(ref, ref, uniform_displacement(g, {0, 0}), -0.5),
                    std::invalid_argument);
}

TEST_CASE("compensating a known shift beats doing nothing") {
    const FeatureMap ref = testutil::make_texture(64, 64, 3);
    const FeatureMap mov = shift_right(ref, 2);
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);

    const double two_px = 2.0 * 2.0 / 63.0;
    const double at_zero = alignment_objective(ref, mov, uniform_displacement(g, {0, 0}), 0.0);
    const double at_fix = alignment_objective(ref, mov, uniform_displacement(g, {two_px, 0}), 0.0);
    CHECK(at_fix < at_zero);
    CHECK(at_fix == doctest::Approx(0.0).epsilon(1e-10));  // integer shift resamples exactly
}

TEST_CASE("aligning an image to itself stays put") {
    const FeatureMap ref = testutil::make_texture(64, 64, 4);
    AlignConfig cfg;
    const AlignResult res = optimize_displacements(ref, ref, tps::make_control_grid(4, 4), cfg);
    for (const Vec2& d : res.displacements.deltas) {
        CHECK(std::abs(d.x) < 1e-3);
        CHECK(std::abs(d.y) < 1e-3);
    }
}

TEST_CASE("accepted objectives never increase and runs are reproducible") {
    const FeatureMap ref = testutil::make_texture(64, 64, 6);
    Rng rng(17);
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);
    std::vector<Vec2> targets;
    for (const Vec2& p : g.points) {
        targets.push_back({p.x + rng.uniform(-0.08, 0.08), p.y + rng.uniform(-0.08, 0.08)});
    }
    const FeatureMap mov = tps::warp_image(ref, tps::solve_tps(g, targets));

    AlignConfig cfg;
    cfg.lambda_bend = 0.5;
    const AlignResult a = optimize_displacements(ref, mov, g, cfg);
    const AlignResult b = optimize_displacements(ref, mov, g, cfg);

    for (size_t i = 1; i < a.accepted_objectives.size(); ++i) {
        CHECK(a.accepted_objectives[i] <= a.accepted_objectives[i - 1]);
    }
    CHECK(a.final_objective <= a.initial_objective);

    REQUIRE(a.displacements.deltas.size() == b.displacements.deltas.size());
    for (size_t i = 0; i < a.displacements.deltas.size(); ++i) {
        CHECK(a.displacements.deltas[i].x == b.displacements.deltas[i].x);
        CHECK(a.displacements.deltas[i].y == b.displacements.deltas[i].y);
    }
    REQUIRE(a.accepted_objectives.size() == b.accepted_objectives.size());
    for (size_t i = 0; i < a.accepted_objectives.size(); ++i) {
        CHECK(a.accepted_objectives[i] == b.accepted_objectives[i]);
    }
}

TEST_CASE("recovering a seeded spline perturbation") {
    const FeatureMap ref = testutil::make_texture(64, 64, 8);
    Rng rng(0);
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);
    std::vector<Vec2> targets;
    for (const Vec2& p : g.points) {
        targets.push_back({p.x + rng.uniform(-0.08, 0.08), p.y + rng.uniform(-0.08, 0.08)});
    }
    const tps::TpsParameters fwd = tps::solve_tps(g, targets);
    const FeatureMap mov = tps::warp_image(ref, fwd);

    AlignConfig cfg;
    cfg.lambda_bend = 0.5;
    const AlignResult res = optimize_displacements(ref, mov, g, cfg);
    CHECK(res.final_objective < 0.5 * res.initial_objective);

    // The spline maps sampling coordinates, so the compensating displacement at
    // each control point is the inverse transform's offset there.
    double err = 0.0, base = 0.0;
    for (size_t i = 0; i < g.points.size(); ++i) {
        const Vec2 truth = testutil::invert_tps(fwd, g.points[i]) - g.points[i];
        err += (res.displacements.deltas[i] - truth).norm();
        base += truth.norm();
    }
    CHECK(err / static_cast<double>(g.points.size()) <
          base / static_cast<double>(g.points.size()));
}

TEST_CASE("pure translation is recovered to sub-pixel accuracy") {
    const FeatureMap ref = testutil::make_texture(64, 64, 10);
    const FeatureMap mov = shift_right(ref, 2);
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);

    AlignConfig cfg;
    cfg.lambda_bend = 0.5;
    const AlignResult res = optimize_displacements(ref, mov, g, cfg);

    std::vector<Vec2> targets(g.points);
    for (size_t i = 0; i < targets.size(); ++i) targets[i] = targets[i] + res.displacements.deltas[i];
    const tps::TpsParameters fit = tps::solve_tps(g, targets);

    double mean_dx = 0.0, mean_dy = 0.0;
    for (const Vec2& p : g.points) {
        const Vec2 moved = tps::evaluate_tps(fit, p) - p;
        mean_dx += moved.x;
        mean_dy += moved.y;
    }
    mean_dx = mean_dx / static_cast<double>(g.count()) * 63.0 / 2.0;  // to pixels
    mean_dy = mean_dy / static_cast<double>(g.count()) * 63.0 / 2.0;
    CHECK(std::abs(mean_dx - 2.0) < 0.5);
    CHECK(std::abs(mean_dy) < 0.5);
}

TEST_CASE("stronger roughness penalties yield smoother solutions") {
    const FeatureMap ref = testutil::make_texture(64, 64, 12);
    Rng rng(5);
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);
    std::vector<Vec2> targets;
    for (const Vec2& p : g.points) {
        targets.push_back({p.x + rng.uniform(-0.08, 0.08), p.y + rng.uniform(-0.08, 0.08)});
    }
    const FeatureMap mov = tps::warp_image(ref, tps::solve_tps(g, targets));

    double prev_bend = -1.0;
    for (double lambda : {0.0, 0.1, 1.0}) {
        AlignConfig cfg;
        cfg.lambda_bend = lambda;
        const AlignResult res = optimize_displacements(ref, mov, g, cfg);
        std::vector<Vec2> q(g.points);
        for (size_t i = 0; i < q.size(); ++i) q[i] = q[i] + res.displacements.deltas[i];
        const double bend = tps::bending_energy(tps::solve_tps(g, q));
        if (prev_bend >= 0.0) CHECK(bend <= prev_bend + 1e-12);
        prev_bend = bend;
    }
}

TEST_CASE("optimizer input validation") {
    const tps::ControlPointGrid g = tps::make_control_grid(4, 4);
    const FeatureMap small(8, 8, 1, 0.5);
    AlignConfig cfg;
    CHECK_THROWS_AS(optimize_displacements(small, small, g, cfg), std::invalid_argument);

    FeatureMap bad = testutil::make_texture(16, 16, 1);
    bad.at(3, 3, 0) = std::nan("");
    const FeatureMap ok = testutil::make_texture(16, 16, 1);
    CHECK_THROWS_AS(alignment_objective(ok, bad, uniform_displacement(g, {0, 0}), 0.0),
                    std::invalid_argument);

    AlignConfig bad_cfg;
    bad_cfg.tol = 1.5;
    CHECK_THROWS_AS(optimize_displacements(ok, ok, g, bad_cfg), std::invalid_argument);
}

TEST_CASE("box downsampling averages quads and truncates odd edges") {
    FeatureMap img(3, 5, 1);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 5; ++x) img.at(y, x, 0) = y * 5 + x;
    }
    const FeatureMap down = downsample2(img);
    REQUIRE(down.height() == 1);
    REQUIRE(down.width() == 2);
    CHECK(down.at(0, 0, 0) == doctest::Approx(0.25 * (0 + 1 + 5 + 6)));
    CHECK(down.at(0, 1, 0) == doctest::Approx(0.25 * (2 + 3 + 7 + 8)));
}

TEST_CASE("displacement serialization round-trips") {
    Displacements d;
    d.grid = tps::make_control_grid(3, 3);
    Rng rng(2);
    for (int i = 0; i < d.grid.count(); ++i) {
        d.deltas.push_back({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
    }
    const Displacements back = parse_displacements(serialize_displacements(d));
    REQUIRE(back.deltas.size() == d.deltas.size());
    for (size_t i = 0; i < d.deltas.size(); ++i) {
        CHECK(back.deltas[i].x == d.deltas[i].x);
        CHECK(back.deltas[i].y == d.deltas[i].y);
    }

    CHECK_THROWS_AS(parse_displacements("{}"), IoError);
    CHECK_THROWS_AS(parse_displacements(serialize_displacements(d) + "x"), IoError);
}
