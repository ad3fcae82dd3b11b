#pragma once

#include <vector>

#include "warpfuse/core/rng.hpp"
#include "warpfuse/core/types.hpp"

namespace warpfuse::fusion {

// Plain dense-array layers. Every layer pairs a forward with an analytic
// backward; backwards ACCUMULATE into the gradient outputs (callers pass
// zero-initialized buffers, or reuse buffers when a tensor feeds several
// consumers). Weight initializers draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
// with zero biases; norm scales start at 1.

FeatureMap zeros_like(const FeatureMap& x);

// --- per-pixel channel projection -----------------------------------------

struct LinearLayer {
    int in_c = 0;
    int out_c = 0;
    std::vector<double> w;  // in_c * out_c, w[i * out_c + o]
    std::vector<double> b;  // out_c

    static LinearLayer make(int in_c, int out_c, Rng& rng);
    static LinearLayer zeros(int in_c, int out_c);
    void collect(std::vector<double*>& out);
};

FeatureMap linear_forward(const LinearLayer& l, const FeatureMap& x);
void linear_backward(const LinearLayer& l, const FeatureMap& x, const FeatureMap& gy,
                     FeatureMap* gx, LinearLayer* gl);

// --- depthwise 3x3 convolution, zero padded -------------------------------

struct DepthwiseConv {
    int channels = 0;
    std::vector<double> k;  // channels * 9, row-major 3x3
    std::vector<double> b;  // channels

    static DepthwiseConv make(int channels, Rng& rng);
    static DepthwiseConv zeros(int channels);
    void collect(std::vector<double*>& out);
};

FeatureMap dwc_forward(const DepthwiseConv& l, const FeatureMap& x);
void dwc_backward(const DepthwiseConv& l, const FeatureMap& x, const FeatureMap& gy,
                  FeatureMap* gx, DepthwiseConv* gl);

// --- full convolution (kernel size 1 or 3), zero padded -------------------

struct ConvLayer {
    int in_c = 0;
    int out_c = 0;
    int ksize = 3;
    std::vector<double> k;  // out_c * in_c * ksize * ksize
    std::vector<double> b;  // out_c

    static ConvLayer make(int in_c, int out_c, int ksize, Rng& rng);
    static ConvLayer zeros(int in_c, int out_c, int ksize);
    void collect(std::vector<double*>& out);
};

FeatureMap conv_forward(const ConvLayer& l, const FeatureMap& x);
void conv_backward(const ConvLayer& l, const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx,
                   ConvLayer* gl);

// --- per-pixel channel normalization --------------------------------------

// y = gamma * (x - mean) / sqrt(var + 1e-5) + beta, statistics over channels at
// each pixel. An all-zero input yields beta exactly.
struct LayerNorm {
    int channels = 0;
    std::vector<double> gamma;
    std::vector<double> beta;

    static LayerNorm make(int channels);
    static LayerNorm zeros(int channels);
    void collect(std::vector<double*>& out);
};

FeatureMap layernorm_forward(const LayerNorm& l, const FeatureMap& x);
void layernorm_backward(const LayerNorm& l, const FeatureMap& x, const FeatureMap& gy,
                        FeatureMap* gx, LayerNorm* gl);

// --- grouped spatial gate --------------------------------------------------

// Per channel group: similarity = dot(feature, spatial mean of the group) at
// each pixel, z-scored over the spatial plane (eps 1e-5), squashed through
// sigmoid(scale * t + shift), and multiplied back onto the group's channels.
// A spatially constant input gates through sigmoid(shift) unchanged in shape.
struct SgeLayer {
    int groups = 0;
    std::vector<double> scale;  // per group, init 1
    std::vector<double> shift;  // per group, init 0

    static SgeLayer make(int groups);
    static SgeLayer zeros(int groups);
    void collect(std::vector<double*>& out);
};

FeatureMap sge_forward(const SgeLayer& l, const FeatureMap& x);
void sge_backward(const SgeLayer& l, const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx,
                  SgeLayer* gl);

// --- parameter-free pieces -------------------------------------------------

// 3x3 mean with boundary-aware counts: border pixels average over their
// in-bounds neighborhood, so a constant map is a fixed point.
FeatureMap avgpool3_forward(const FeatureMap& x);
void avgpool3_backward(const FeatureMap& gy, FeatureMap* gx);

// Detail enhancement: x + dwc(x - avgpool3(x)). Constant inputs pass through
// untouched when the conv bias is zero.
FeatureMap dem_forward(const DepthwiseConv& dwc, const FeatureMap& x);
void dem_backward(const DepthwiseConv& dwc, const FeatureMap& x, const FeatureMap& gy,
                  FeatureMap* gx, DepthwiseConv* gl);

FeatureMap silu_forward(const FeatureMap& x);
void silu_backward(const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx);

FeatureMap sigmoid_forward(const FeatureMap& x);
void sigmoid_backward(const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx);

FeatureMap tanh_forward(const FeatureMap& x);
void tanh_backward(const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx);

// Align-corners bilinear resize.
FeatureMap resize_bilinear(const FeatureMap& x, int out_h, int out_w);
void resize_bilinear_backward(const FeatureMap& gy, int in_h, int in_w, FeatureMap* gx);

// Global average pool to a 1x1xC map, and channel concatenation.
FeatureMap gap_forward(const FeatureMap& x);
void gap_backward(const FeatureMap& gy, int h, int w, FeatureMap* gx);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);
void concat_channels_backward(const FeatureMap& gy, FeatureMap* ga, FeatureMap* gb);

}  // namespace warpfuse::fusion
