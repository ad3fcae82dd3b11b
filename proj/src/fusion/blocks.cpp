#include "warpfuse/fusion/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "warpfuse/tps/warp.hpp"

namespace warpfuse::fusion {

namespace {

void check_pair(const FeatureMap& a, const FeatureMap& b, const char* who) {
    if (a.empty() || b.empty() || !a.same_shape(b)) {
        throw std::invalid_argument(std::string(who) + ": inputs must be non-empty and same shape");
    }
}

FeatureMap hadamard(const FeatureMap& a, const FeatureMap& b) {
    FeatureMap out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

void add_into(FeatureMap* dst, const FeatureMap& src) {
    for (size_t i = 0; i < dst->size(); ++i) dst->data()[i] += src.data()[i];
}

// dst += a (.) b, used for product-rule terms.
void add_product(FeatureMap* dst, const FeatureMap& a, const FeatureMap& b) {
    for (size_t i = 0; i < dst->size(); ++i) dst->data()[i] += a.data()[i] * b.data()[i];
}

}  // namespace

// --- sccm -------------------------------------------------------------------

SccmBranch SccmBranch::make(int in_c, int hidden, Rng& rng) {
    SccmBranch b;
    b.dem_dwc = DepthwiseConv::make(in_c, rng);
    b.ln_feat = LayerNorm::make(in_c);
    b.lp_feat = LinearLayer::make(in_c, hidden, rng);
    b.dwc_feat = DepthwiseConv::make(hidden, rng);
    b.ln_gate = LayerNorm::make(in_c);
    b.lp_gate = LinearLayer::make(in_c, hidden, rng);
    return b;
}

void SccmBranch::collect(std::vector<double*>& out) {
    dem_dwc.collect(out);
    ln_feat.collect(out);
    lp_feat.collect(out);
    dwc_feat.collect(out);
    ln_gate.collect(out);
    lp_gate.collect(out);
}

SccmWeights SccmWeights::make(int in_c, int hidden, int out_c, int groups, int state_dim,
                              Rng& rng) {
    if (out_c % groups != 0) throw std::invalid_argument("sccm: out_c must be divisible by groups");
    SccmWeights w;
    w.rgb = SccmBranch::make(in_c, hidden, rng);
    w.t = SccmBranch::make(in_c, hidden, rng);
    w.scan = ScanParams::make(hidden, state_dim, rng);
    w.mix = LinearLayer::make(hidden, out_c, rng);
    w.sge = SgeLayer::make(groups);
    return w;
}

SccmWeights SccmWeights::zeros_like(const SccmWeights& w) {
    SccmWeights g;
    g.rgb.dem_dwc = DepthwiseConv::zeros(w.rgb.dem_dwc.channels);
    g.rgb.ln_feat = LayerNorm::zeros(w.rgb.ln_feat.channels);
    g.rgb.lp_feat = LinearLayer::zeros(w.rgb.lp_feat.in_c, w.rgb.lp_feat.out_c);
    g.rgb.dwc_feat = DepthwiseConv::zeros(w.rgb.dwc_feat.channels);
    g.rgb.ln_gate = LayerNorm::zeros(w.rgb.ln_gate.channels);
    g.rgb.lp_gate = LinearLayer::zeros(w.rgb.lp_gate.in_c, w.rgb.lp_gate.out_c);
    g.t = g.rgb;
    g.scan = ScanParams::zeros(w.scan.channels, w.scan.state_dim);
    g.mix = LinearLayer::zeros(w.mix.in_c, w.mix.out_c);
    g.sge = SgeLayer::zeros(w.sge.groups);
    return g;
}

void SccmWeights::collect(std::vector<double*>& out) {
    rgb.collect(out);
    t.collect(out);
    scan.collect(out);
    mix.collect(out);
    sge.collect(out);
}

namespace {

struct SccmBranchCtx {
    FeatureMap e;         // dem output
    FeatureMap ln_f;      // ln_feat(e)
    FeatureMap lp_f;      // lp_feat(ln_f)
    FeatureMap dwc_f;     // dwc_feat(lp_f)
    FeatureMap feat;      // silu(dwc_f)
    FeatureMap ln_g;      // ln_gate(e)
    FeatureMap lp_g;      // lp_gate(ln_g)
    FeatureMap gate;      // silu(lp_g)
};

struct SccmCtx {
    SccmBranchCtx r, t;
    FeatureMap mixed;     // feat_r + feat_t + feat_r (.) feat_t
    FeatureMap scanned;   // es2d(mixed)
    FeatureMap combined;  // scanned (.) gate_r + scanned (.) gate_t
    FeatureMap pre;       // mix(combined)
    FeatureMap out;       // sge(pre) + pre
};

SccmBranchCtx sccm_branch_run(const SccmBranch& b, const FeatureMap& f) {
    SccmBranchCtx c;
    c.e = dem_forward(b.dem_dwc, f);
    c.ln_f = layernorm_forward(b.ln_feat, c.e);
    c.lp_f = linear_forward(b.lp_feat, c.ln_f);
    c.dwc_f = dwc_forward(b.dwc_feat, c.lp_f);
    c.feat = silu_forward(c.dwc_f);
    c.ln_g = layernorm_forward(b.ln_gate, c.e);
    c.lp_g = linear_forward(b.lp_gate, c.ln_g);
    c.gate = silu_forward(c.lp_g);
    return c;
}

SccmCtx sccm_run(const FeatureMap& f_rgb, const FeatureMap& f_t, const SccmWeights& w) {
    check_pair(f_rgb, f_t, "sccm_forward");
    if (f_rgb.channels() != w.rgb.dem_dwc.channels) {
        throw std::invalid_argument("sccm_forward: channel count does not match weights");
    }
    SccmCtx c;
    c.r = sccm_branch_run(w.rgb, f_rgb);
    c.t = sccm_branch_run(w.t, f_t);
    c.mixed = c.r.feat;
    add_into(&c.mixed, c.t.feat);
    add_product(&c.mixed, c.r.feat, c.t.feat);
    c.scanned = es2d(c.mixed, w.scan);
    c.combined = hadamard(c.scanned, c.r.gate);
    add_product(&c.combined, c.scanned, c.t.gate);
    c.pre = linear_forward(w.mix, c.combined);
    c.out = sge_forward(w.sge, c.pre);
    add_into(&c.out, c.pre);
    return c;
}

void sccm_branch_backward(const SccmBranch& b, const FeatureMap& f, const SccmBranchCtx& c,
                          const FeatureMap& gfeat, const FeatureMap& ggate, SccmBranch* gb) {
    FeatureMap ge = zeros_like(c.e);

    FeatureMap g_dwc = zeros_like(c.dwc_f);
    silu_backward(c.dwc_f, gfeat, &g_dwc);
    FeatureMap g_lp = zeros_like(c.lp_f);
    dwc_backward(b.dwc_feat, c.lp_f, g_dwc, &g_lp, &gb->dwc_feat);
    FeatureMap g_ln = zeros_like(c.ln_f);
    linear_backward(b.lp_feat, c.ln_f, g_lp, &g_ln, &gb->lp_feat);
    layernorm_backward(b.ln_feat, c.e, g_ln, &ge, &gb->ln_feat);

    FeatureMap g_lpg = zeros_like(c.lp_g);
    silu_backward(c.lp_g, ggate, &g_lpg);
    FeatureMap g_lng = zeros_like(c.ln_g);
    linear_backward(b.lp_gate, c.ln_g, g_lpg, &g_lng, &gb->lp_gate);
    layernorm_backward(b.ln_gate, c.e, g_lng, &ge, &gb->ln_gate);

    dem_backward(b.dem_dwc, f, ge, nullptr, &gb->dem_dwc);
}

}  // namespace

FeatureMap sccm_forward(const FeatureMap& f_rgb, const FeatureMap& f_t, const SccmWeights& w) {
    return sccm_run(f_rgb, f_t, w).out;
}

SccmWeights sccm_param_grads(const FeatureMap& f_rgb, const FeatureMap& f_t,
                             const SccmWeights& w) {
    SccmCtx c = sccm_run(f_rgb, f_t, w);
    SccmWeights g = SccmWeights::zeros_like(w);

    FeatureMap ones(c.out.height(), c.out.width(), c.out.channels(), 1.0);

    // out = sge(pre) + pre: pre feeds both terms.
    FeatureMap gpre = zeros_like(c.pre);
    sge_backward(w.sge, c.pre, ones, &gpre, &g.sge);
    add_into(&gpre, ones);

    FeatureMap gcombined = zeros_like(c.combined);
    linear_backward(w.mix, c.combined, gpre, &gcombined, &g.mix);

    FeatureMap gscanned = hadamard(gcombined, c.r.gate);
    add_product(&gscanned, gcombined, c.t.gate);
    FeatureMap ggate_r = hadamard(gcombined, c.scanned);
    FeatureMap ggate_t = ggate_r;

    FeatureMap gmixed = zeros_like(c.mixed);
    es2d_backward(c.mixed, w.scan, gscanned, &gmixed, &g.scan);

    // mixed = feat_r + feat_t + feat_r (.) feat_t.
    FeatureMap gfeat_r = gmixed;
    add_product(&gfeat_r, gmixed, c.t.feat);
    FeatureMap gfeat_t = gmixed;
    add_product(&gfeat_t, gmixed, c.r.feat);

    sccm_branch_backward(w.rgb, f_rgb, c.r, gfeat_r, ggate_r, &g.rgb);
    sccm_branch_backward(w.t, f_t, c.t, gfeat_t, ggate_t, &g.t);
    return g;
}

// --- guidance ---------------------------------------------------------------

std::pair<FeatureMap, FeatureMap> guide_features(const FeatureMap& sgf, const FeatureMap& f_rgb,
                                                 const FeatureMap& f_t, const ConvLayer& conv) {
    check_pair(f_rgb, f_t, "guide_features");
    if (sgf.empty() || conv.in_c != sgf.channels() || conv.out_c != f_rgb.channels()) {
        throw std::invalid_argument("guide_features: conv shape does not match inputs");
    }
    int rh = f_rgb.height() / sgf.height();
    int rw = f_rgb.width() / sgf.width();
    if (rh < 1 || rw < 1 || rh != rw || rh * sgf.height() != f_rgb.height() ||
        rw * sgf.width() != f_rgb.width() || (rh & (rh - 1)) != 0) {
        throw std::invalid_argument("guide_features: feature size must be a power-of-two multiple");
    }
    FeatureMap guide = conv_forward(conv, sgf);
    guide = resize_bilinear(guide, f_rgb.height(), f_rgb.width());
    return {hadamard(guide, f_rgb), hadamard(guide, f_t)};
}

// --- tpsam ------------------------------------------------------------------

TpsamBranch TpsamBranch::make(int c, int groups, int state_dim, Rng& rng) {
    if (c % groups != 0) throw std::invalid_argument("tpsam: channels must be divisible by groups");
    TpsamBranch b;
    b.ln = LayerNorm::make(c);
    b.scan = ScanParams::make(c, state_dim, rng);
    b.sge = SgeLayer::make(groups);
    return b;
}

void TpsamBranch::collect(std::vector<double*>& out) {
    ln.collect(out);
    scan.collect(out);
    sge.collect(out);
}

TpsamWeights TpsamWeights::make(int c, int n_points, int groups, int state_dim, int win,
                                double max_disp, Rng& rng) {
    TpsamWeights w;
    w.rgb = TpsamBranch::make(c, groups, state_dim, rng);
    w.t = TpsamBranch::make(c, groups, state_dim, rng);
    w.fc = LinearLayer::make(2 * c, 2 * n_points, rng);
    w.win = win;
    w.max_disp = max_disp;
    return w;
}

void TpsamWeights::collect(std::vector<double*>& out) {
    rgb.collect(out);
    t.collect(out);
    fc.collect(out);
}

namespace {

struct TpsamBranchCtx {
    FeatureMap ln_out;
    FeatureMap scan_out;
    FeatureMap embed;  // sge(scan_out)
};

struct TpsamCtx {
    TpsamBranchCtx r, t;
    FeatureMap cat;     // concat(embed_r, embed_t)
    FeatureMap pooled;  // 1x1x2c
    FeatureMap raw;     // fc(pooled), 1x1x2N
    std::vector<Vec2> deltas;
};

TpsamBranchCtx tpsam_branch_run(const TpsamBranch& b, const FeatureMap& f, int win) {
    TpsamBranchCtx c;
    c.ln_out = layernorm_forward(b.ln, f);
    c.scan_out = lssm(c.ln_out, b.scan, win);
    c.embed = sge_forward(b.sge, c.scan_out);
    return c;
}

TpsamCtx tpsam_run(const FeatureMap& f_rgb, const FeatureMap& f_t, const TpsamWeights& w,
                   size_t n_points) {
    check_pair(f_rgb, f_t, "tpsam_forward");
    if (w.fc.out_c != static_cast<int>(2 * n_points) || w.fc.in_c != 2 * f_rgb.channels()) {
        throw std::invalid_argument("tpsam_forward: head shape does not match grid / channels");
    }
    if (!(w.max_disp > 0.0)) throw std::invalid_argument("tpsam_forward: max_disp must be positive");
    TpsamCtx c;
    c.r = tpsam_branch_run(w.rgb, f_rgb, w.win);
    c.t = tpsam_branch_run(w.t, f_t, w.win);
    c.cat = concat_channels(c.r.embed, c.t.embed);
    c.pooled = gap_forward(c.cat);
    c.raw = linear_forward(w.fc, c.pooled);
    c.deltas.resize(n_points);
    for (size_t i = 0; i < n_points; ++i) {
        c.deltas[i] = {w.max_disp * std::tanh(c.raw.at(0, 0, static_cast<int>(2 * i))),
                       w.max_disp * std::tanh(c.raw.at(0, 0, static_cast<int>(2 * i + 1)))};
    }
    return c;
}

}  // namespace

TpsamOutput tpsam_forward(const FeatureMap& f_rgb, const FeatureMap& f_t, const TpsamWeights& w,
                          const tps::ControlPointGrid& grid) {
    tps::validate_grid(grid);
    TpsamCtx c = tpsam_run(f_rgb, f_t, w, grid.points.size());
    TpsamOutput out;
    out.displacements.grid = grid;
    out.displacements.deltas = c.deltas;
    std::vector<Vec2> targets(grid.points.size());
    for (size_t i = 0; i < targets.size(); ++i) targets[i] = grid.points[i] + c.deltas[i];
    tps::TpsParameters params = tps::solve_tps(grid, targets);
    out.warped_t = tps::warp_image(f_t, params);
    return out;
}

TpsamWeights tpsam_fc_param_grads(const FeatureMap& f_rgb, const FeatureMap& f_t,
                                  const TpsamWeights& w, const tps::ControlPointGrid& grid) {
    tps::validate_grid(grid);
    TpsamCtx c = tpsam_run(f_rgb, f_t, w, grid.points.size());

    TpsamWeights g;
    g.rgb.ln = LayerNorm::zeros(w.rgb.ln.channels);
    g.rgb.scan = ScanParams::zeros(w.rgb.scan.channels, w.rgb.scan.state_dim);
    g.rgb.sge = SgeLayer::zeros(w.rgb.sge.groups);
    g.t = g.rgb;
    g.fc = LinearLayer::zeros(w.fc.in_c, w.fc.out_c);
    g.win = w.win;
    g.max_disp = w.max_disp;

    // Probe is the sum of all displacement components.
    FeatureMap graw(1, 1, c.raw.channels());
    for (int ch = 0; ch < c.raw.channels(); ++ch) {
        double th = std::tanh(c.raw.at(0, 0, ch));
        graw.at(0, 0, ch) = w.max_disp * (1.0 - th * th);
    }
    FeatureMap gpooled = zeros_like(c.pooled);
    linear_backward(w.fc, c.pooled, graw, &gpooled, &g.fc);
    FeatureMap gcat = zeros_like(c.cat);
    gap_backward(gpooled, c.cat.height(), c.cat.width(), &gcat);
    FeatureMap gembed_r = zeros_like(c.r.embed);
    FeatureMap gembed_t = zeros_like(c.t.embed);
    concat_channels_backward(gcat, &gembed_r, &gembed_t);

    auto branch_back = [&](const TpsamBranch& b, const FeatureMap& f, const TpsamBranchCtx& bc,
                           const FeatureMap& gembed, TpsamBranch* gb) {
        FeatureMap gscan = zeros_like(bc.scan_out);
        sge_backward(b.sge, bc.scan_out, gembed, &gscan, &gb->sge);
        FeatureMap gln = zeros_like(bc.ln_out);
        lssm_backward(bc.ln_out, b.scan, w.win, gscan, &gln, &gb->scan);
        layernorm_backward(b.ln, f, gln, nullptr, &gb->ln);
    };
    branch_back(w.rgb, f_rgb, c.r, gembed_r, &g.rgb);
    branch_back(w.t, f_t, c.t, gembed_t, &g.t);
    return g;
}

// --- cmcm -------------------------------------------------------------------

CmcmBranch CmcmBranch::make(int c, int hidden, int state_dim, Rng& rng) {
    CmcmBranch b;
    b.dem_dwc = DepthwiseConv::make(c, rng);
    b.ln_y = LayerNorm::make(c);
    b.lp_y = LinearLayer::make(c, hidden, rng);
    b.dwc_y = DepthwiseConv::make(hidden, rng);
    b.scan = ScanParams::make(hidden, state_dim, rng);
    b.ln_z = LayerNorm::make(c);
    b.lp_z = LinearLayer::make(c, hidden, rng);
    return b;
}

void CmcmBranch::collect(std::vector<double*>& out) {
    dem_dwc.collect(out);
    ln_y.collect(out);
    lp_y.collect(out);
    dwc_y.collect(out);
    scan.collect(out);
    ln_z.collect(out);
    lp_z.collect(out);
}

CmcmWeights CmcmWeights::make(int c, int hidden, int groups, int state_dim, Rng& rng) {
    if (c % groups != 0) throw std::invalid_argument("cmcm: channels must be divisible by groups");
    CmcmWeights w;
    w.rgb = CmcmBranch::make(c, hidden, state_dim, rng);
    w.t = CmcmBranch::make(c, hidden, state_dim, rng);
    w.lp_out_rgb = LinearLayer::make(hidden, c, rng);
    w.lp_out_t = LinearLayer::make(hidden, c, rng);
    w.sge_rgb = SgeLayer::make(groups);
    w.sge_t = SgeLayer::make(groups);
    return w;
}

void CmcmWeights::collect(std::vector<double*>& out) {
    rgb.collect(out);
    t.collect(out);
    lp_out_rgb.collect(out);
    lp_out_t.collect(out);
    sge_rgb.collect(out);
    sge_t.collect(out);
}

namespace {

struct CmcmBranchCtx {
    FeatureMap d;        // dem output
    FeatureMap ln_y;
    FeatureMap lp_y;
    FeatureMap dwc_y;
    FeatureMap act_y;    // silu(dwc_y)
    FeatureMap y;        // es2d(act_y)
    FeatureMap ln_z;
    FeatureMap lp_z;
    FeatureMap z;        // silu(lp_z)
};

struct CmcmCtx {
    CmcmBranchCtx r, t;
    FeatureMap u_r;    // (y_r + y_t) (.) z_r
    FeatureMap u_t;    // (y_t + y_r) (.) z_t
    FeatureMap lp_r;   // lp_out_rgb(u_r)
    FeatureMap lp_t;
    FeatureMap out_r;  // sge(lp_r) + f_rgb
    FeatureMap out_t;  // sge(lp_t) + a_t
};

CmcmBranchCtx cmcm_branch_run(const CmcmBranch& b, const FeatureMap& x) {
    CmcmBranchCtx c;
    c.d = dem_forward(b.dem_dwc, x);
    c.ln_y = layernorm_forward(b.ln_y, c.d);
    c.lp_y = linear_forward(b.lp_y, c.ln_y);
    c.dwc_y = dwc_forward(b.dwc_y, c.lp_y);
    c.act_y = silu_forward(c.dwc_y);
    c.y = es2d(c.act_y, b.scan);
    c.ln_z = layernorm_forward(b.ln_z, c.d);
    c.lp_z = linear_forward(b.lp_z, c.ln_z);
    c.z = silu_forward(c.lp_z);
    return c;
}

CmcmCtx cmcm_run(const FeatureMap& f_rgb, const FeatureMap& a_t, const CmcmWeights& w) {
    check_pair(f_rgb, a_t, "cmcm_forward");
    if (f_rgb.channels() != w.rgb.dem_dwc.channels) {
        throw std::invalid_argument("cmcm_forward: channel count does not match weights");
    }
    CmcmCtx c;
    c.r = cmcm_branch_run(w.rgb, f_rgb);
    c.t = cmcm_branch_run(w.t, a_t);
    c.u_r = hadamard(c.r.y, c.r.z);
    add_product(&c.u_r, c.t.y, c.r.z);
    c.u_t = hadamard(c.t.y, c.t.z);
    add_product(&c.u_t, c.r.y, c.t.z);
    c.lp_r = linear_forward(w.lp_out_rgb, c.u_r);
    c.lp_t = linear_forward(w.lp_out_t, c.u_t);
    c.out_r = sge_forward(w.sge_rgb, c.lp_r);
    add_into(&c.out_r, f_rgb);
    c.out_t = sge_forward(w.sge_t, c.lp_t);
    add_into(&c.out_t, a_t);
    return c;
}

void cmcm_branch_backward(const CmcmBranch& b, const FeatureMap& x, const CmcmBranchCtx& c,
                          const FeatureMap& gy, const FeatureMap& gz, CmcmBranch* gb) {
    FeatureMap gd = zeros_like(c.d);

    FeatureMap g_act = zeros_like(c.act_y);
    es2d_backward(c.act_y, b.scan, gy, &g_act, &gb->scan);
    FeatureMap g_dwc = zeros_like(c.dwc_y);
    silu_backward(c.dwc_y, g_act, &g_dwc);
    FeatureMap g_lp = zeros_like(c.lp_y);
    dwc_backward(b.dwc_y, c.lp_y, g_dwc, &g_lp, &gb->dwc_y);
    FeatureMap g_ln = zeros_like(c.ln_y);
    linear_backward(b.lp_y, c.ln_y, g_lp, &g_ln, &gb->lp_y);
    layernorm_backward(b.ln_y, c.d, g_ln, &gd, &gb->ln_y);

    FeatureMap g_lpz = zeros_like(c.lp_z);
    silu_backward(c.lp_z, gz, &g_lpz);
    FeatureMap g_lnz = zeros_like(c.ln_z);
    linear_backward(b.lp_z, c.ln_z, g_lpz, &g_lnz, &gb->lp_z);
    layernorm_backward(b.ln_z, c.d, g_lnz, &gd, &gb->ln_z);

    dem_backward(b.dem_dwc, x, gd, nullptr, &gb->dem_dwc);
}

}  // namespace

std::pair<FeatureMap, FeatureMap> cmcm_forward(const FeatureMap& f_rgb, const FeatureMap& a_t,
                                               const CmcmWeights& w) {
    CmcmCtx c = cmcm_run(f_rgb, a_t, w);
    return {c.out_r, c.out_t};
}

CmcmWeights cmcm_param_grads(const FeatureMap& f_rgb, const FeatureMap& a_t,
                             const CmcmWeights& w) {
    CmcmCtx c = cmcm_run(f_rgb, a_t, w);

    CmcmWeights g;
    g.rgb.dem_dwc = DepthwiseConv::zeros(w.rgb.dem_dwc.channels);
    g.rgb.ln_y = LayerNorm::zeros(w.rgb.ln_y.channels);
    g.rgb.lp_y = LinearLayer::zeros(w.rgb.lp_y.in_c, w.rgb.lp_y.out_c);
    g.rgb.dwc_y = DepthwiseConv::zeros(w.rgb.dwc_y.channels);
    g.rgb.scan = ScanParams::zeros(w.rgb.scan.channels, w.rgb.scan.state_dim);
    g.rgb.ln_z = LayerNorm::zeros(w.rgb.ln_z.channels);
    g.rgb.lp_z = LinearLayer::zeros(w.rgb.lp_z.in_c, w.rgb.lp_z.out_c);
    g.t = g.rgb;
    g.lp_out_rgb = LinearLayer::zeros(w.lp_out_rgb.in_c, w.lp_out_rgb.out_c);
    g.lp_out_t = LinearLayer::zeros(w.lp_out_t.in_c, w.lp_out_t.out_c);
    g.sge_rgb = SgeLayer::zeros(w.sge_rgb.groups);
    g.sge_t = SgeLayer::zeros(w.sge_t.groups);

    // Probe is sum(out_r) + sum(out_t); the residual adds do not touch params.
    FeatureMap ones(c.out_r.height(), c.out_r.width(), c.out_r.channels(), 1.0);
    FeatureMap g_lp_r = zeros_like(c.lp_r);
    sge_backward(w.sge_rgb, c.lp_r, ones, &g_lp_r, &g.sge_rgb);
    FeatureMap g_lp_t = zeros_like(c.lp_t);
    sge_backward(w.sge_t, c.lp_t, ones, &g_lp_t, &g.sge_t);

    FeatureMap gu_r = zeros_like(c.u_r);
    linear_backward(w.lp_out_rgb, c.u_r, g_lp_r, &gu_r, &g.lp_out_rgb);
    FeatureMap gu_t = zeros_like(c.u_t);
    linear_backward(w.lp_out_t, c.u_t, g_lp_t, &gu_t, &g.lp_out_t);

    // u_r = (y_r + y_t) (.) z_r and u_t = (y_t + y_r) (.) z_t.
    FeatureMap gy_r = hadamard(gu_r, c.r.z);
    add_product(&gy_r, gu_t, c.t.z);
    FeatureMap gy_t = hadamard(gu_t, c.t.z);
    add_product(&gy_t, gu_r, c.r.z);
    FeatureMap gz_r = hadamard(gu_r, c.r.y);
    add_product(&gz_r, gu_r, c.t.y);
    FeatureMap gz_t = hadamard(gu_t, c.t.y);
    add_product(&gz_t, gu_t, c.r.y);

    cmcm_branch_backward(w.rgb, f_rgb, c.r, gy_r, gz_r, &g.rgb);
    cmcm_branch_backward(w.t, a_t, c.t, gy_t, gz_t, &g.t);
    return g;
}

// --- decoder ----------------------------------------------------------------

DecodeWeights DecodeWeights::make(const std::array<int, 3>& level_channels, int d, Rng& rng) {
    DecodeWeights w;
    for (int i = 0; i < 3; ++i) w.s_conv[i] = ConvLayer::make(2 * level_channels[i], d, 3, rng);
    for (int i = 0; i < 2; ++i) w.up_conv[i] = ConvLayer::make(d, d, 3, rng);
    w.head = ConvLayer::make(d, 1, 1, rng);
    return w;
}

void DecodeWeights::collect(std::vector<double*>& out) {
    for (auto& l : s_conv) l.collect(out);
    for (auto& l : up_conv) l.collect(out);
    head.collect(out);
}

namespace {

struct DecodeCtx {
    std::array<FeatureMap, 3> cat;   // per level concat
    std::array<FeatureMap, 3> s;     // s_conv outputs
    FeatureMap res4;                 // s[2] resized to level-3 size
    FeatureMap up4;                  // up_conv[0](res4)
    FeatureMap p3;                   // s[1] + up4
    FeatureMap res3;                 // p3 resized to level-2 size
    FeatureMap up3;                  // up_conv[1](res3)
    FeatureMap p2;                   // s[0] + up3
    FeatureMap logits;               // head(p2)
    FeatureMap prob;                 // sigmoid(logits)
    FeatureMap up_out;               // prob upsampled 4x
};

DecodeCtx decode_run(const std::array<std::pair<FeatureMap, FeatureMap>, 3>& levels,
                     const DecodeWeights& w) {
    for (int i = 0; i < 3; ++i) {
        check_pair(levels[i].first, levels[i].second, "decode");
        if (i > 0 && (levels[i].first.height() * 2 != levels[i - 1].first.height() ||
                      levels[i].first.width() * 2 != levels[i - 1].first.width())) {
            throw std::invalid_argument("decode: each level must halve the previous size");
        }
    }
    DecodeCtx c;
    for (int i = 0; i < 3; ++i) {
        c.cat[i] = concat_channels(levels[i].first, levels[i].second);
        c.s[i] = conv_forward(w.s_conv[i], c.cat[i]);
    }
    c.res4 = resize_bilinear(c.s[2], c.s[1].height(), c.s[1].width());
    c.up4 = conv_forward(w.up_conv[0], c.res4);
    c.p3 = c.s[1];
    add_into(&c.p3, c.up4);
    c.res3 = resize_bilinear(c.p3, c.s[0].height(), c.s[0].width());
    c.up3 = conv_forward(w.up_conv[1], c.res3);
    c.p2 = c.s[0];
    add_into(&c.p2, c.up3);
    c.logits = conv_forward(w.head, c.p2);
    c.prob = sigmoid_forward(c.logits);
    c.up_out = resize_bilinear(c.prob, 4 * c.prob.height(), 4 * c.prob.width());
    return c;
}

}  // namespace

SaliencyMap decode(const std::array<std::pair<FeatureMap, FeatureMap>, 3>& levels,
                   const DecodeWeights& w) {
    DecodeCtx c = decode_run(levels, w);
    SaliencyMap out(c.up_out.height(), c.up_out.width());
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) out.values[static_cast<size_t>(y) * out.width + x] = c.up_out.at(y, x, 0);
    }
    return out;
}

DecodeWeights decode_param_grads(const std::array<std::pair<FeatureMap, FeatureMap>, 3>& levels,
                                 const DecodeWeights& w) {
    DecodeCtx c = decode_run(levels, w);

    DecodeWeights g;
    for (int i = 0; i < 3; ++i) {
        g.s_conv[i] = ConvLayer::zeros(w.s_conv[i].in_c, w.s_conv[i].out_c, w.s_conv[i].ksize);
    }
    for (int i = 0; i < 2; ++i) {
        g.up_conv[i] = ConvLayer::zeros(w.up_conv[i].in_c, w.up_conv[i].out_c, w.up_conv[i].ksize);
    }
    g.head = ConvLayer::zeros(w.head.in_c, w.head.out_c, w.head.ksize);

    FeatureMap gup(c.up_out.height(), c.up_out.width(), 1, 1.0);
    FeatureMap gprob = zeros_like(c.prob);
    resize_bilinear_backward(gup, c.prob.height(), c.prob.width(), &gprob);
    FeatureMap glogits = zeros_like(c.logits);
    sigmoid_backward(c.logits, gprob, &glogits);
    FeatureMap gp2 = zeros_like(c.p2);
    conv_backward(w.head, c.p2, glogits, &gp2, &g.head);

    // p2 = s[0] + up_conv[1](resize(p3)).
    conv_backward(w.s_conv[0], c.cat[0], gp2, nullptr, &g.s_conv[0]);
    FeatureMap gres3 = zeros_like(c.res3);
    conv_backward(w.up_conv[1], c.res3, gp2, &gres3, &g.up_conv[1]);
    FeatureMap gp3 = zeros_like(c.p3);
    resize_bilinear_backward(gres3, c.p3.height(), c.p3.width(), &gp3);

    conv_backward(w.s_conv[1], c.cat[1], gp3, nullptr, &g.s_conv[1]);
    FeatureMap gres4 = zeros_like(c.res4);
    conv_backward(w.up_conv[0], c.res4, gp3, &gres4, &g.up_conv[0]);
    FeatureMap gs4 = zeros_like(c.s[2]);
    resize_bilinear_backward(gres4, c.s[2].height(), c.s[2].width(), &gs4);
    conv_backward(w.s_conv[2], c.cat[2], gs4, nullptr, &g.s_conv[2]);
    return g;
}

}  // namespace warpfuse::fusion
