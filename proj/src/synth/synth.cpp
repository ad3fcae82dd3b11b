#include "warpfuse/synth/synth.hpp"

#include <cmath>

#include "warpfuse/core/json_format.hpp"
#include "warpfuse/core/rng.hpp"
#include "warpfuse/tps/serialize.hpp"
#include "warpfuse/tps/warp.hpp"

namespace warpfuse::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ClassBounds {
    double theta;  // radians
    double scale_lo, scale_hi;
    double trans;
    double residual;
};

ClassBounds bounds_for(PerturbClass cls) {
    if (cls == PerturbClass::kWeak) {
        return {10.0 * kPi / 180.0, 0.9, 1.1, 0.1, 0.1};
    }
    return {25.0 * kPi / 180.0, 0.7, 1.3, 0.25, 0.2};
}

void fill_affine(PerturbationSpec& spec) {
    const double c = spec.scale * std::cos(spec.theta);
    const double s = spec.scale * std::sin(spec.theta);
    spec.affine = {c, -s, spec.tx, s, c, spec.ty};
}

}  // namespace

PerturbationSpec sample_perturbation(uint64_t seed, PerturbClass cls,
                                     const tps::ControlPointGrid& grid) {
    tps::validate_grid(grid);
    const ClassBounds b = bounds_for(cls);

    PerturbationSpec spec;
    spec.cls = cls;
    spec.seed = seed;
    spec.grid = grid;

    // Sampling order is part of the contract: theta, scale, tx, ty, then the
    // residuals (x, y) per point in row-major order.
    Rng rng(seed);
    spec.theta = rng.uniform(-b.theta, b.theta);
    spec.scale = rng.uniform(b.scale_lo, b.scale_hi);
    spec.tx = rng.uniform(-b.trans, b.trans);
    spec.ty = rng.uniform(-b.trans, b.trans);
    spec.tps_deltas.reserve(grid.points.size());
    for (size_t i = 0; i < grid.points.size(); ++i) {
        const double dx = rng.uniform(-b.residual, b.residual);
        const double dy = rng.uniform(-b.residual, b.residual);
        spec.tps_deltas.push_back({dx, dy});
    }
    fill_affine(spec);
    return spec;
}

PerturbationSpec identity_perturbation(const tps::ControlPointGrid& grid) {
    tps::validate_grid(grid);
    PerturbationSpec spec;
    spec.grid = grid;
    spec.tps_deltas.assign(grid.points.size(), Vec2{0.0, 0.0});
    fill_affine(spec);
    return spec;
}

Vec2 apply_affine(const PerturbationSpec& spec, Vec2 p) {
    return {spec.affine[0] * p.x + spec.affine[1] * p.y + spec.affine[2],
            spec.affine[3] * p.x + spec.affine[4] * p.y + spec.affine[5]};
}

PerturbedPair apply_perturbation(const FeatureMap& img, const SaliencyMap& gt,
                                 const PerturbationSpec& spec) {
    if (img.height() != gt.height || img.width() != gt.width) {
        throw std::invalid_argument("apply_perturbation: image and gt shapes differ");
    }
    tps::validate_grid(spec.grid);
    if (spec.tps_deltas.size() != spec.grid.points.size()) {
        throw std::invalid_argument("apply_perturbation: residual count does not match grid");
    }

    std::vector<Vec2> targets;
    targets.reserve(spec.grid.points.size());
    for (size_t i = 0; i < spec.grid.points.size(); ++i) {
        const Vec2 q = apply_affine(spec, spec.grid.points[i]) + spec.tps_deltas[i];
        if (!q.finite()) throw std::invalid_argument("apply_perturbation: non-finite target");
        targets.push_back(q);
    }

    PerturbedPair out;
    out.params = tps::solve_tps(spec.grid, targets);
    out.image = tps::warp_image(img, out.params);

    FeatureMap gt_map(gt.height, gt.width, 1);
    gt_map.data() = gt.values;
    const FeatureMap warped_gt = tps::warp_image(gt_map, out.params);
    out.gt = SaliencyMap(gt.height, gt.width);
    for (size_t i = 0; i < out.gt.values.size(); ++i) {
        out.gt.values[i] = warped_gt.data()[i] >= 0.5 ? 1.0 : 0.0;
    }
    return out;
}

std::string serialize_spec(const PerturbationSpec& spec, const tps::TpsParameters& params) {
    std::string out = "{\"class\":\"";
    out += spec.cls == PerturbClass::kWeak ? "weak" : "strong";
    out += "\",\"seed\":" + std::to_string(spec.seed);
    out += ",\"theta\":" + format_double(spec.theta);
    out += ",\"scale\":" + format_double(spec.scale);
    out += ",\"tx\":" + format_double(spec.tx);
    out += ",\"ty\":" + format_double(spec.ty);
    out += ",\"affine\":[[" + format_double(spec.affine[0]) + "," + format_double(spec.affine[1]) +
           "," + format_double(spec.affine[2]) + "],[" + format_double(spec.affine[3]) + "," +
           format_double(spec.affine[4]) + "," + format_double(spec.affine[5]) + "]]";
    out += ",\"tps_deltas\":[";
    for (size_t i = 0; i < spec.tps_deltas.size(); ++i) {
        if (i) out += ",";
        out += "[" + format_double(spec.tps_deltas[i].x) + "," +
               format_double(spec.tps_deltas[i].y) + "]";
    }
    out += "],\"grid\":" + tps::serialize_grid(spec.grid);
    out += ",\"params\":" + tps::serialize_parameters(params) + "}";
    return out;
}

}  // namespace warpfuse::synth
