#include "warpfuse/fusion/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "warpfuse/core/rng.hpp"
#include "warpfuse/fusion/blocks.hpp"
#include "warpfuse/fusion/loss.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::fusion {

namespace {

constexpr double kStep = 1e-4;
constexpr int kMaxProbes = 200;

FeatureMap random_map(int h, int w, int c, Rng& rng) {
    FeatureMap m(h, w, c);
    for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
    return m;
}

// Central-difference sweep over a seeded subset of the parameters.
GradCheckReport fd_sweep(const std::string& name, const std::vector<double*>& params,
                         const std::vector<double>& analytic,
                         const std::function<double()>& probe, Rng& rng) {
    if (params.size() != analytic.size()) {
        throw std::logic_error("grad_check: parameter / gradient count mismatch");
    }
    std::vector<size_t> order(params.size());
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);
    size_t take = std::min<size_t>(kMaxProbes, order.size());

    GradCheckReport rep;
    rep.block = name;
    rep.param_count = static_cast<int>(params.size());
    rep.checked = static_cast<int>(take);
    for (size_t k = 0; k < take; ++k) {
        size_t i = order[k];
        double saved = *params[i];
        *params[i] = saved + kStep;
        double fp = probe();
        *params[i] = saved - kStep;
        double fm = probe();
        *params[i] = saved;
        double numeric = (fp - fm) / (2.0 * kStep);
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
    return rep;
}

std::vector<double> flatten_grads(std::vector<double*>&& ptrs) {
    std::vector<double> out(ptrs.size());
    for (size_t i = 0; i < ptrs.size(); ++i) out[i] = *ptrs[i];
    return out;
}

double sum(const FeatureMap& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v;
    return acc;
}

GradCheckReport check_linear(uint64_t seed) {
    Rng rng(seed);
    LinearLayer l = LinearLayer::make(5, 4, rng);
    FeatureMap x = random_map(6, 6, 5, rng);

    FeatureMap y = linear_forward(l, x);
    FeatureMap ones(y.height(), y.width(), y.channels(), 1.0);
    LinearLayer gl = LinearLayer::zeros(l.in_c, l.out_c);
    linear_backward(l, x, ones, nullptr, &gl);

    std::vector<double*> params;
    l.collect(params);
    std::vector<double*> gptrs;
    gl.collect(gptrs);
    auto probe = [&]() { return sum(linear_forward(l, x)); };
    return fd_sweep("linear", params, flatten_grads(std::move(gptrs)), probe, rng);
}

GradCheckReport check_sccm(uint64_t seed) {
    Rng rng(seed);
    SccmWeights w = SccmWeights::make(8, 8, 8, 4, 3, rng);
    FeatureMap fr = random_map(8, 8, 8, rng);
    FeatureMap ft = random_map(8, 8, 8, rng);

    SccmWeights g = sccm_param_grads(fr, ft, w);
    std::vector<double*> params;
    w.collect(params);
    std::vector<double*> gptrs;
    g.collect(gptrs);
    auto probe = [&]() { return sum(sccm_forward(fr, ft, w)); };
    return fd_sweep("sccm", params, flatten_grads(std::move(gptrs)), probe, rng);
}

GradCheckReport check_tpsam_fc(uint64_t seed) {
    Rng rng(seed);
    tps::ControlPointGrid grid = tps::make_control_grid(3, 3);
    TpsamWeights w = TpsamWeights::make(8, static_cast<int>(grid.points.size()), 4, 3, 4, 0.5, rng);
    FeatureMap fr = random_map(8, 8, 8, rng);
    FeatureMap ft = random_map(8, 8, 8, rng);

    TpsamWeights g = tpsam_fc_param_grads(fr, ft, w, grid);
    std::vector<double*> params;
    w.collect(params);
    std::vector<double*> gptrs;
    g.collect(gptrs);
    auto probe = [&]() {
        TpsamOutput out = tpsam_forward(fr, ft, w, grid);
        double acc = 0.0;
        for (const Vec2& d : out.displacements.deltas) acc += d.x + d.y;
        return acc;
    };
    return fd_sweep("tpsam-fc", params, flatten_grads(std::move(gptrs)), probe, rng);
}

GradCheckReport check_cmcm(uint64_t seed) {
    Rng rng(seed);
    CmcmWeights w = CmcmWeights::make(8, 8, 4, 3, rng);
    FeatureMap fr = random_map(8, 8, 8, rng);
    FeatureMap at = random_map(8, 8, 8, rng);

    CmcmWeights g = cmcm_param_grads(fr, at, w);
    std::vector<double*> params;
    w.collect(params);
    std::vector<double*> gptrs;
    g.collect(gptrs);
    auto probe = [&]() {
        auto [a, b] = cmcm_forward(fr, at, w);
        return sum(a) + sum(b);
    };
    return fd_sweep("cmcm", params, flatten_grads(std::move(gptrs)), probe, rng);
}

GradCheckReport check_decode(uint64_t seed) {
    Rng rng(seed);
    DecodeWeights w = DecodeWeights::make({6, 6, 6}, 6, rng);
    std::array<std::pair<FeatureMap, FeatureMap>, 3> levels = {
        std::make_pair(random_map(8, 8, 6, rng), random_map(8, 8, 6, rng)),
        std::make_pair(random_map(4, 4, 6, rng), random_map(4, 4, 6, rng)),
        std::make_pair(random_map(2, 2, 6, rng), random_map(2, 2, 6, rng)),
    };

    DecodeWeights g = decode_param_grads(levels, w);
    std::vector<double*> params;
    w.collect(params);
    std::vector<double*> gptrs;
    g.collect(gptrs);
    auto probe = [&]() {
        SaliencyMap p = decode(levels, w);
        double acc = 0.0;
        for (double v : p.values) acc += v;
        return acc;
    };
    return fd_sweep("decode", params, flatten_grads(std::move(gptrs)), probe, rng);
}

// The loss has no weights; the prediction pixels play the parameter role. The
// prediction is snapped to a 1/32 grid so absolute-value kinks sit either
// exactly at zero (where the central difference and the subgradient both
// vanish) or a safe distance from the probe step.
GradCheckReport check_loss(uint64_t seed) {
    Rng rng(seed);
    SaliencyMap pred(12, 12), gt(12, 12);
    for (double& v : pred.values) {
        v = (3.0 + std::floor(rng.uniform() * 25.0)) / 32.0;
    }
    for (double& v : gt.values) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

    std::vector<double> analytic(pred.values.size(), 0.0);
    loss_total_grad(pred, gt, &analytic);
    std::vector<double*> params(pred.values.size());
    for (size_t i = 0; i < params.size(); ++i) params[i] = &pred.values[i];
    auto probe = [&]() { return loss_total(pred, gt); };
    return fd_sweep("loss", params, analytic, probe, rng);
}

}  // namespace

const std::vector<std::string>& grad_check_blocks() {
    static const std::vector<std::string> kBlocks = {"linear", "sccm",   "tpsam-fc",
                                                     "cmcm",   "decode", "loss"};
    return kBlocks;
}

GradCheckReport grad_check(const std::string& block, uint64_t seed) {
    if (block == "linear") return check_linear(seed);
    if (block == "sccm") return check_sccm(seed);
    if (block == "tpsam-fc") return check_tpsam_fc(seed);
    if (block == "cmcm") return check_cmcm(seed);
    if (block == "decode") return check_decode(seed);
    if (block == "loss") return check_loss(seed);
    throw std::invalid_argument("grad_check: unknown block '" + block + "'");
}

}  // namespace warpfuse::fusion
