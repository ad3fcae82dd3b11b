#pragma once

#include <array>
#include <utility>

#include "warpfuse/align/align.hpp"
#include "warpfuse/fusion/layers.hpp"
#include "warpfuse/fusion/scan.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::fusion {

// Each block couples a forward pass with an analytic parameter-gradient pass for
// the scalar probe loss sum(outputs). The *_param_grads functions return the
// gradients in an identically shaped weights struct; the finite-difference
// harness in grad_check.cpp walks the same collect() ordering.

// --- cross-modal feature mixer --------------------------------------------

struct SccmBranch {
    DepthwiseConv dem_dwc;
    LayerNorm ln_feat;
    LinearLayer lp_feat;  // in_c -> hidden
    DepthwiseConv dwc_feat;
    LayerNorm ln_gate;
    LinearLayer lp_gate;  // in_c -> hidden

    static SccmBranch make(int in_c, int hidden, Rng& rng);
    void collect(std::vector<double*>& out);
};

struct SccmWeights {
    SccmBranch rgb;
    SccmBranch t;
    ScanParams scan;     // hidden channels
    LinearLayer mix;     // hidden -> out_c
    SgeLayer sge;

    static SccmWeights make(int in_c, int hidden, int out_c, int groups, int state_dim, Rng& rng);
    static SccmWeights zeros_like(const SccmWeights& w);
    void collect(std::vector<double*>& out);
};

// Branch features silu(dwc(lp(ln(dem(f))))) per modality are blended as
// sum + product, scanned, gated by silu(lp(ln(dem(f)))) per modality, mixed by
// one projection, and finished with the grouped gate plus a residual.
// Symmetric in (f_rgb, f_t) when both branches share weights.
FeatureMap sccm_forward(const FeatureMap& f_rgb, const FeatureMap& f_t, const SccmWeights& w);
SccmWeights sccm_param_grads(const FeatureMap& f_rgb, const FeatureMap& f_t, const SccmWeights& w);

// --- guidance ---------------------------------------------------------------

// conv(sgf) upsampled to the feature size, multiplied onto both modalities.
// The conv output channels must match the features'; the feature size must be
// the sgf size times a power of two.
std::pair<FeatureMap, FeatureMap> guide_features(const FeatureMap& sgf, const FeatureMap& f_rgb,
                                                 const FeatureMap& f_t, const ConvLayer& conv);

// --- displacement prediction + warp ----------------------------------------

struct TpsamBranch {
    LayerNorm ln;
    ScanParams scan;
    SgeLayer sge;

    static TpsamBranch make(int c, int groups, int state_dim, Rng& rng);
    void collect(std::vector<double*>& out);
};

struct TpsamWeights {
    TpsamBranch rgb;
    TpsamBranch t;
    LinearLayer fc;  // 2c -> 2N
    int win = 4;
    double max_disp = 0.5;

    static TpsamWeights make(int c, int n_points, int groups, int state_dim, int win,
                             double max_disp, Rng& rng);
    void collect(std::vector<double*>& out);
};

struct TpsamOutput {
    align::Displacements displacements;
    FeatureMap warped_t;
};

// Embeds both modalities (sge(lssm(ln(.)))), pools the concatenation, predicts
// per-control-point displacements through the fully connected head (bounded to
// +-max_disp by tanh), then warps the second modality with the solved spline.
// Zero head weights yield zero displacements and an exact identity warp.
TpsamOutput tpsam_forward(const FeatureMap& f_rgb, const FeatureMap& f_t, const TpsamWeights& w,
                          const tps::ControlPointGrid& grid);

// Gradient of sum(displacements) through the prediction path (embeddings, pool,
// head); the warp is not part of the probe.
TpsamWeights tpsam_fc_param_grads(const FeatureMap& f_rgb, const FeatureMap& f_t,
                                  const TpsamWeights& w, const tps::ControlPointGrid& grid);

// --- gated state fusion ----------------------------------------------------

struct CmcmBranch {
    DepthwiseConv dem_dwc;
    LayerNorm ln_y;
    LinearLayer lp_y;  // c -> hidden
    DepthwiseConv dwc_y;
    ScanParams scan;   // hidden
    LayerNorm ln_z;
    LinearLayer lp_z;  // c -> hidden

    static CmcmBranch make(int c, int hidden, int state_dim, Rng& rng);
    void collect(std::vector<double*>& out);
};

struct CmcmWeights {
    CmcmBranch rgb;
    CmcmBranch t;
    LinearLayer lp_out_rgb;  // hidden -> c
    LinearLayer lp_out_t;
    SgeLayer sge_rgb;
    SgeLayer sge_t;

    static CmcmWeights make(int c, int hidden, int groups, int state_dim, Rng& rng);
    void collect(std::vector<double*>& out);
};

// Scan features y_m = es2d(silu(dwc(lp(ln(dem(.)))))) and gates
// z_m = silu(lp(ln(dem(.)))) from both inputs; each output mixes both scan
// features under its own gate, projects, gates spatially, and adds its input
// back. With all projection weights zero the inputs pass through exactly.
std::pair<FeatureMap, FeatureMap> cmcm_forward(const FeatureMap& f_rgb, const FeatureMap& a_t,
                                               const CmcmWeights& w);
CmcmWeights cmcm_param_grads(const FeatureMap& f_rgb, const FeatureMap& a_t, const CmcmWeights& w);

// --- decoder ----------------------------------------------------------------

struct DecodeWeights {
    std::array<ConvLayer, 3> s_conv;   // per level, finest first: 2*c_i -> d, 3x3
    std::array<ConvLayer, 2> up_conv;  // d -> d, 3x3; [0] merges level 3, [1] level 2
    ConvLayer head;                    // d -> 1, 1x1

    static DecodeWeights make(const std::array<int, 3>& level_channels, int d, Rng& rng);
    void collect(std::vector<double*>& out);
};

// levels[0] is the finest (largest) pair; each following level halves the
// spatial size. Per-level concat + conv, top-down upsample-by-2 merges, 1x1
// head + logistic squash at the finest level, then a 4x bilinear upsample.
SaliencyMap decode(const std::array<std::pair<FeatureMap, FeatureMap>, 3>& levels,
                   const DecodeWeights& w);
DecodeWeights decode_param_grads(const std::array<std::pair<FeatureMap, FeatureMap>, 3>& levels,
                                 const DecodeWeights& w);

}  // namespace warpfuse::fusion
