#include "warpfuse/fusion/layers.hpp"

#include <cmath>

namespace warpfuse::fusion {

namespace {

constexpr double kNormEps = 1.0e-5;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_channels(const FeatureMap& x, int channels, const char* who) {
    if (x.channels() != channels) {
        throw std::invalid_argument(std::string(who) + ": channel count mismatch");
    }
}

}  // namespace

FeatureMap zeros_like(const FeatureMap& x) {
    return FeatureMap(x.height(), x.width(), x.channels(), 0.0);
}

// --- LinearLayer ----------------------------------------------------------

LinearLayer LinearLayer::make(int in_c, int out_c, Rng& rng) {
    LinearLayer l = zeros(in_c, out_c);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c));
    for (double& v : l.w) v = rng.uniform(-bound, bound);
    return l;
}

LinearLayer LinearLayer::zeros(int in_c, int out_c) {
    LinearLayer l;
    l.in_c = in_c;
    l.out_c = out_c;
    l.w.assign(static_cast<size_t>(in_c) * out_c, 0.0);
    l.b.assign(static_cast<size_t>(out_c), 0.0);
    return l;
}

void LinearLayer::collect(std::vector<double*>& out) {
    for (double& v : w) out.push_back(&v);
    for (double& v : b) out.push_back(&v);
}

FeatureMap linear_forward(const LinearLayer& l, const FeatureMap& x) {
    check_channels(x, l.in_c, "linear");
    FeatureMap y(x.height(), x.width(), l.out_c);
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    for (size_t p = 0; p < pixels; ++p) {
        const double* xin = &x.data()[p * l.in_c];
        double* yout = &y.data()[p * l.out_c];
        for (int o = 0; o < l.out_c; ++o) yout[o] = l.b[o];
        for (int i = 0; i < l.in_c; ++i) {
            const double xv = xin[i];
            const double* wrow = &l.w[static_cast<size_t>(i) * l.out_c];
            for (int o = 0; o < l.out_c; ++o) yout[o] += wrow[o] * xv;
        }
    }
    return y;
}

void linear_backward(const LinearLayer& l, const FeatureMap& x, const FeatureMap& gy,
                     FeatureMap* gx, LinearLayer* gl) {
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    for (size_t p = 0; p < pixels; ++p) {
        const double* xin = &x.data()[p * l.in_c];
        const double* g = &gy.data()[p * l.out_c];
        for (int o = 0; o < l.out_c; ++o) gl->b[o] += g[o];
        for (int i = 0; i < l.in_c; ++i) {
            const double* wrow = &l.w[static_cast<size_t>(i) * l.out_c];
            double* gwrow = &gl->w[static_cast<size_t>(i) * l.out_c];
            double acc = 0.0;
            for (int o = 0; o < l.out_c; ++o) {
                gwrow[o] += xin[i] * g[o];
                acc += wrow[o] * g[o];
            }
            if (gx) gx->data()[p * l.in_c + i] += acc;
        }
    }
}

// --- DepthwiseConv --------------------------------------------------------

DepthwiseConv DepthwiseConv::make(int channels, Rng& rng) {
    DepthwiseConv l = zeros(channels);
    const double bound = 1.0 / 3.0;  // fan_in = 9
    for (double& v : l.k) v = rng.uniform(-bound, bound);
    return l;
}

DepthwiseConv DepthwiseConv::zeros(int channels) {
    DepthwiseConv l;
    l.channels = channels;
    l.k.assign(static_cast<size_t>(channels) * 9, 0.0);
    l.b.assign(static_cast<size_t>(channels), 0.0);
    return l;
}

void DepthwiseConv::collect(std::vector<double*>& out) {
    for (double& v : k) out.push_back(&v);
    for (double& v : b) out.push_back(&v);
}

FeatureMap dwc_forward(const DepthwiseConv& l, const FeatureMap& x) {
    check_channels(x, l.channels, "dwc");
    const int h = x.height(), w = x.width(), c = x.channels();
    FeatureMap y(h, w, c);
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = l.b[ch];
                const double* kk = &l.k[static_cast<size_t>(ch) * 9];
                for (int dy = -1; dy <= 1; ++dy) {
                    const int sy = yy + dy;
                    if (sy < 0 || sy >= h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = xx + dx;
                        if (sx < 0 || sx >= w) continue;
                        acc += kk[(dy + 1) * 3 + (dx + 1)] * x.at(sy, sx, ch);
                    }
                }
                y.at(yy, xx, ch) = acc;
            }
        }
    }
    return y;
}

void dwc_backward(const DepthwiseConv& l, const FeatureMap& x, const FeatureMap& gy,
                  FeatureMap* gx, DepthwiseConv* gl) {
    const int h = x.height(), w = x.width(), c = x.channels();
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            for (int ch = 0; ch < c; ++ch) {
                const double g = gy.at(yy, xx, ch);
                gl->b[ch] += g;
                const double* kk = &l.k[static_cast<size_t>(ch) * 9];
                double* gk = &gl->k[static_cast<size_t>(ch) * 9];
                for (int dy = -1; dy <= 1; ++dy) {
                    const int sy = yy + dy;
                    if (sy < 0 || sy >= h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = xx + dx;
                        if (sx < 0 || sx >= w) continue;
                        gk[(dy + 1) * 3 + (dx + 1)] += g * x.at(sy, sx, ch);
                        if (gx) gx->at(sy, sx, ch) += g * kk[(dy + 1) * 3 + (dx + 1)];
                    }
                }
            }
        }
    }
}

// --- ConvLayer ------------------------------------------------------------

ConvLayer ConvLayer::make(int in_c, int out_c, int ksize, Rng& rng) {
    ConvLayer l = zeros(in_c, out_c, ksize);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c) * ksize * ksize);
    for (double& v : l.k) v = rng.uniform(-bound, bound);
    return l;
}

ConvLayer ConvLayer::zeros(int in_c, int out_c, int ksize) {
    if (ksize != 1 && ksize != 3) throw std::invalid_argument("conv: ksize must be 1 or 3");
    ConvLayer l;
    l.in_c = in_c;
    l.out_c = out_c;
    l.ksize = ksize;
    l.k.assign(static_cast<size_t>(out_c) * in_c * ksize * ksize, 0.0);
    l.b.assign(static_cast<size_t>(out_c), 0.0);
    return l;
}

void ConvLayer::collect(std::vector<double*>& out) {
    for (double& v : k) out.push_back(&v);
    for (double& v : b) out.push_back(&v);
}

FeatureMap conv_forward(const ConvLayer& l, const FeatureMap& x) {
    check_channels(x, l.in_c, "conv");
    const int h = x.height(), w = x.width();
    const int r = l.ksize / 2;
    FeatureMap y(h, w, l.out_c);
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            for (int o = 0; o < l.out_c; ++o) {
                double acc = l.b[o];
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = yy + dy;
                    if (sy < 0 || sy >= h) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = xx + dx;
                        if (sx < 0 || sx >= w) continue;
                        const size_t base =
                            ((static_cast<size_t>(o) * l.in_c) * l.ksize + (dy + r)) * l.ksize +
                            (dx + r);
                        for (int i = 0; i < l.in_c; ++i) {
                            acc += l.k[base + static_cast<size_t>(i) * l.ksize * l.ksize] *
                                   x.at(sy, sx, i);
                        }
                    }
                }
                y.at(yy, xx, o) = acc;
            }
        }
    }
    return y;
}

void conv_backward(const ConvLayer& l, const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx,
                   ConvLayer* gl) {
    const int h = x.height(), w = x.width();
    const int r = l.ksize / 2;
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            for (int o = 0; o < l.out_c; ++o) {
                const double g = gy.at(yy, xx, o);
                gl->b[o] += g;
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = yy + dy;
                    if (sy < 0 || sy >= h) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = xx + dx;
                        if (sx < 0 || sx >= w) continue;
                        const size_t base =
                            ((static_cast<size_t>(o) * l.in_c) * l.ksize + (dy + r)) * l.ksize +
                            (dx + r);
                        for (int i = 0; i < l.in_c; ++i) {
                            const size_t ki = base + static_cast<size_t>(i) * l.ksize * l.ksize;
                            gl->k[ki] += g * x.at(sy, sx, i);
                            if (gx) gx->at(sy, sx, i) += g * l.k[ki];
                        }
                    }
                }
            }
        }
    }
}

// --- LayerNorm ------------------------------------------------------------

LayerNorm LayerNorm::make(int channels) {
    LayerNorm l;
    l.channels = channels;
    l.gamma.assign(static_cast<size_t>(channels), 1.0);
    l.beta.assign(static_cast<size_t>(channels), 0.0);
    return l;
}

LayerNorm LayerNorm::zeros(int channels) {
    LayerNorm l = make(channels);
    std::fill(l.gamma.begin(), l.gamma.end(), 0.0);
    return l;
}

void LayerNorm::collect(std::vector<double*>& out) {
    for (double& v : gamma) out.push_back(&v);
    for (double& v : beta) out.push_back(&v);
}

FeatureMap layernorm_forward(const LayerNorm& l, const FeatureMap& x) {
    check_channels(x, l.channels, "layernorm");
    const int c = l.channels;
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    FeatureMap y(x.height(), x.width(), c);
    for (size_t p = 0; p < pixels; ++p) {
        const double* xin = &x.data()[p * c];
        double* yout = &y.data()[p * c];
        double mean = 0.0;
        for (int i = 0; i < c; ++i) mean += xin[i];
        mean /= c;
        double var = 0.0;
        for (int i = 0; i < c; ++i) var += (xin[i] - mean) * (xin[i] - mean);
        var /= c;
        const double inv_sd = 1.0 / std::sqrt(var + kNormEps);
        for (int i = 0; i < c; ++i) {
            yout[i] = l.gamma[i] * (xin[i] - mean) * inv_sd + l.beta[i];
        }
    }
    return y;
}

void layernorm_backward(const LayerNorm& l, const FeatureMap& x, const FeatureMap& gy,
                        FeatureMap* gx, LayerNorm* gl) {
    const int c = l.channels;
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    std::vector<double> xhat(c), gxhat(c);
    for (size_t p = 0; p < pixels; ++p) {
        const double* xin = &x.data()[p * c];
        const double* g = &gy.data()[p * c];
        double mean = 0.0;
        for (int i = 0; i < c; ++i) mean += xin[i];
        mean /= c;
        double var = 0.0;
        for (int i = 0; i < c; ++i) var += (xin[i] - mean) * (xin[i] - mean);
        var /= c;
        const double inv_sd = 1.0 / std::sqrt(var + kNormEps);

        double mean_g = 0.0, mean_gx = 0.0;
        for (int i = 0; i < c; ++i) {
            xhat[i] = (xin[i] - mean) * inv_sd;
            gxhat[i] = g[i] * l.gamma[i];
            gl->gamma[i] += g[i] * xhat[i];
            gl->beta[i] += g[i];
            mean_g += gxhat[i];
            mean_gx += gxhat[i] * xhat[i];
        }
        mean_g /= c;
        mean_gx /= c;
        if (gx) {
            for (int i = 0; i < c; ++i) {
                gx->data()[p * c + i] += inv_sd * (gxhat[i] - mean_g - xhat[i] * mean_gx);
            }
        }
    }
}

// --- SgeLayer -------------------------------------------------------------

SgeLayer SgeLayer::make(int groups) {
    SgeLayer l;
    l.groups = groups;
    l.scale.assign(static_cast<size_t>(groups), 1.0);
    l.shift.assign(static_cast<size_t>(groups), 0.0);
    return l;
}

SgeLayer SgeLayer::zeros(int groups) {
    SgeLayer l = make(groups);
    std::fill(l.scale.begin(), l.scale.end(), 0.0);
    return l;
}

void SgeLayer::collect(std::vector<double*>& out) {
    for (double& v : scale) out.push_back(&v);
    for (double& v : shift) out.push_back(&v);
}

FeatureMap sge_forward(const SgeLayer& l, const FeatureMap& x) {
    if (l.groups <= 0 || x.channels() % l.groups != 0) {
        throw std::invalid_argument("sge: channels must divide evenly into groups");
    }
    const int c = x.channels();
    const int gc = c / l.groups;
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    FeatureMap y(x.height(), x.width(), c);

    std::vector<double> sim(pixels);
    for (int g = 0; g < l.groups; ++g) {
        const int c0 = g * gc;
        std::vector<double> avg(gc, 0.0);
        for (size_t p = 0; p < pixels; ++p) {
            for (int i = 0; i < gc; ++i) avg[i] += x.data()[p * c + c0 + i];
        }
        for (double& v : avg) v /= static_cast<double>(pixels);

        double mean = 0.0;
        for (size_t p = 0; p < pixels; ++p) {
            double s = 0.0;
            for (int i = 0; i < gc; ++i) s += x.data()[p * c + c0 + i] * avg[i];
            sim[p] = s;
            mean += s;
        }
        mean /= static_cast<double>(pixels);
        double var = 0.0;
        for (size_t p = 0; p < pixels; ++p) var += (sim[p] - mean) * (sim[p] - mean);
        var /= static_cast<double>(pixels);
        const double inv_sd = 1.0 / std::sqrt(var + kNormEps);

        for (size_t p = 0; p < pixels; ++p) {
            const double t = (sim[p] - mean) * inv_sd;
            const double gate = sigmoid(l.scale[g] * t + l.shift[g]);
            for (int i = 0; i < gc; ++i) {
                y.data()[p * c + c0 + i] = x.data()[p * c + c0 + i] * gate;
            }
        }
    }
    return y;
}

void sge_backward(const SgeLayer& l, const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx,
                  SgeLayer* gl) {
    const int c = x.channels();
    const int gc = c / l.groups;
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    const double np = static_cast<double>(pixels);

    std::vector<double> sim(pixels), t(pixels), gate(pixels), dgate(pixels), dt(pixels),
        dsim(pixels);
    for (int g = 0; g < l.groups; ++g) {
        const int c0 = g * gc;
        std::vector<double> avg(gc, 0.0);
        for (size_t p = 0; p < pixels; ++p) {
            for (int i = 0; i < gc; ++i) avg[i] += x.data()[p * c + c0 + i];
        }
        for (double& v : avg) v /= np;

        double mean = 0.0;
        for (size_t p = 0; p < pixels; ++p) {
            double s = 0.0;
            for (int i = 0; i < gc; ++i) s += x.data()[p * c + c0 + i] * avg[i];
            sim[p] = s;
            mean += s;
        }
        mean /= np;
        double var = 0.0;
        for (size_t p = 0; p < pixels; ++p) var += (sim[p] - mean) * (sim[p] - mean);
        var /= np;
        const double inv_sd = 1.0 / std::sqrt(var + kNormEps);

        // d(out)/d(gate) plus the direct product path into gx.
        for (size_t p = 0; p < pixels; ++p) {
            t[p] = (sim[p] - mean) * inv_sd;
            gate[p] = sigmoid(l.scale[g] * t[p] + l.shift[g]);
            double acc = 0.0;
            for (int i = 0; i < gc; ++i) {
                const double go = gy.data()[p * c + c0 + i];
                acc += go * x.data()[p * c + c0 + i];
                if (gx) gx->data()[p * c + c0 + i] += go * gate[p];
            }
            dgate[p] = acc;
        }

        double mean_dt = 0.0, mean_dt_t = 0.0;
        for (size_t p = 0; p < pixels; ++p) {
            const double du = dgate[p] * gate[p] * (1.0 - gate[p]);
            gl->scale[g] += du * t[p];
            gl->shift[g] += du;
            dt[p] = du * l.scale[g];
            mean_dt += dt[p];
            mean_dt_t += dt[p] * t[p];
        }
        mean_dt /= np;
        mean_dt_t /= np;
        for (size_t p = 0; p < pixels; ++p) {
            dsim[p] = inv_sd * (dt[p] - mean_dt - t[p] * mean_dt_t);
        }

        if (gx) {
            // sim[p] = x[p] . avg, and avg itself depends on every pixel.
            std::vector<double> davg(gc, 0.0);
            for (size_t p = 0; p < pixels; ++p) {
                for (int i = 0; i < gc; ++i) {
                    gx->data()[p * c + c0 + i] += dsim[p] * avg[i];
                    davg[i] += dsim[p] * x.data()[p * c + c0 + i];
                }
            }
            for (size_t p = 0; p < pixels; ++p) {
                for (int i = 0; i < gc; ++i) {
                    gx->data()[p * c + c0 + i] += davg[i] / np;
                }
            }
        }
    }
}

// --- parameter-free pieces -------------------------------------------------

FeatureMap avgpool3_forward(const FeatureMap& x) {
    const int h = x.height(), w = x.width(), c = x.channels();
    FeatureMap y(h, w, c);
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            const int y0 = std::max(yy - 1, 0), y1 = std::min(yy + 1, h - 1);
            const int x0 = std::max(xx - 1, 0), x1 = std::min(xx + 1, w - 1);
            const double inv = 1.0 / ((y1 - y0 + 1) * (x1 - x0 + 1));
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int sy = y0; sy <= y1; ++sy) {
                    for (int sx = x0; sx <= x1; ++sx) acc += x.at(sy, sx, ch);
                }
                y.at(yy, xx, ch) = acc * inv;
            }
        }
    }
    return y;
}

void avgpool3_backward(const FeatureMap& gy, FeatureMap* gx) {
    const int h = gy.height(), w = gy.width(), c = gy.channels();
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            const int y0 = std::max(yy - 1, 0), y1 = std::min(yy + 1, h - 1);
            const int x0 = std::max(xx - 1, 0), x1 = std::min(xx + 1, w - 1);
            const double inv = 1.0 / ((y1 - y0 + 1) * (x1 - x0 + 1));
            for (int ch = 0; ch < c; ++ch) {
                const double g = gy.at(yy, xx, ch) * inv;
                for (int sy = y0; sy <= y1; ++sy) {
                    for (int sx = x0; sx <= x1; ++sx) gx->at(sy, sx, ch) += g;
                }
            }
        }
    }
}

FeatureMap dem_forward(const DepthwiseConv& dwc, const FeatureMap& x) {
    const FeatureMap pool = avgpool3_forward(x);
    FeatureMap diff = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) diff.data()[i] = x.data()[i] - pool.data()[i];
    const FeatureMap detail = dwc_forward(dwc, diff);
    FeatureMap y = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] + detail.data()[i];
    return y;
}

void dem_backward(const DepthwiseConv& dwc, const FeatureMap& x, const FeatureMap& gy,
                  FeatureMap* gx, DepthwiseConv* gl) {
    const FeatureMap pool = avgpool3_forward(x);
    FeatureMap diff = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) diff.data()[i] = x.data()[i] - pool.data()[i];

    FeatureMap gdiff = zeros_like(x);
    dwc_backward(dwc, diff, gy, &gdiff, gl);

    if (gx) {
        for (size_t i = 0; i < x.size(); ++i) gx->data()[i] += gy.data()[i] + gdiff.data()[i];
        // diff subtracts the pooled map, so its gradient flows back negated.
        FeatureMap neg = zeros_like(x);
        avgpool3_backward(gdiff, &neg);
        for (size_t i = 0; i < x.size(); ++i) gx->data()[i] -= neg.data()[i];
    }
}

FeatureMap silu_forward(const FeatureMap& x) {
    FeatureMap y = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        y.data()[i] = v * sigmoid(v);
    }
    return y;
}

void silu_backward(const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx) {
    for (size_t i = 0; i < x.size(); ++i) {
        const double s = sigmoid(x.data()[i]);
        gx->data()[i] += gy.data()[i] * s * (1.0 + x.data()[i] * (1.0 - s));
    }
}

FeatureMap sigmoid_forward(const FeatureMap& x) {
    FeatureMap y = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) y.data()[i] = sigmoid(x.data()[i]);
    return y;
}

void sigmoid_backward(const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx) {
    for (size_t i = 0; i < x.size(); ++i) {
        const double s = sigmoid(x.data()[i]);
        gx->data()[i] += gy.data()[i] * s * (1.0 - s);
    }
}

FeatureMap tanh_forward(const FeatureMap& x) {
    FeatureMap y = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) y.data()[i] = std::tanh(x.data()[i]);
    return y;
}

void tanh_backward(const FeatureMap& x, const FeatureMap& gy, FeatureMap* gx) {
    for (size_t i = 0; i < x.size(); ++i) {
        const double t = std::tanh(x.data()[i]);
        gx->data()[i] += gy.data()[i] * (1.0 - t * t);
    }
}

FeatureMap resize_bilinear(const FeatureMap& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: bad output size");
    const int h = x.height(), w = x.width(), c = x.channels();
    FeatureMap y(out_h, out_w, c);
    for (int yy = 0; yy < out_h; ++yy) {
        const double sy = out_h > 1 ? static_cast<double>(yy) * (h - 1) / (out_h - 1) : 0.0;
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - y0;
        for (int xx = 0; xx < out_w; ++xx) {
            const double sx = out_w > 1 ? static_cast<double>(xx) * (w - 1) / (out_w - 1) : 0.0;
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - x0;
            for (int ch = 0; ch < c; ++ch) {
                y.at(yy, xx, ch) = (1.0 - fy) * ((1.0 - fx) * x.at(y0, x0, ch) +
                                                 fx * x.at(y0, x1, ch)) +
                                   fy * ((1.0 - fx) * x.at(y1, x0, ch) + fx * x.at(y1, x1, ch));
            }
        }
    }
    return y;
}

void resize_bilinear_backward(const FeatureMap& gy, int in_h, int in_w, FeatureMap* gx) {
    const int out_h = gy.height(), out_w = gy.width(), c = gy.channels();
    for (int yy = 0; yy < out_h; ++yy) {
        const double sy = out_h > 1 ? static_cast<double>(yy) * (in_h - 1) / (out_h - 1) : 0.0;
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, in_h - 1);
        const double fy = sy - y0;
        for (int xx = 0; xx < out_w; ++xx) {
            const double sx = out_w > 1 ? static_cast<double>(xx) * (in_w - 1) / (out_w - 1) : 0.0;
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, in_w - 1);
            const double fx = sx - x0;
            for (int ch = 0; ch < c; ++ch) {
                const double g = gy.at(yy, xx, ch);
                gx->at(y0, x0, ch) += g * (1.0 - fy) * (1.0 - fx);
                gx->at(y0, x1, ch) += g * (1.0 - fy) * fx;
                gx->at(y1, x0, ch) += g * fy * (1.0 - fx);
                gx->at(y1, x1, ch) += g * fy * fx;
            }
        }
    }
}

FeatureMap gap_forward(const FeatureMap& x) {
    const int c = x.channels();
    const size_t pixels = static_cast<size_t>(x.height()) * x.width();
    FeatureMap y(1, 1, c);
    for (size_t p = 0; p < pixels; ++p) {
        for (int ch = 0; ch < c; ++ch) y.data()[ch] += x.data()[p * c + ch];
    }
    for (int ch = 0; ch < c; ++ch) y.data()[ch] /= static_cast<double>(pixels);
    return y;
}

void gap_backward(const FeatureMap& gy, int h, int w, FeatureMap* gx) {
    const int c = gy.channels();
    const double inv = 1.0 / (static_cast<double>(h) * w);
    const size_t pixels = static_cast<size_t>(h) * w;
    for (size_t p = 0; p < pixels; ++p) {
        for (int ch = 0; ch < c; ++ch) gx->data()[p * c + ch] += gy.data()[ch] * inv;
    }
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw std::invalid_argument("concat: spatial shapes differ");
    }
    const int ca = a.channels(), cb = b.channels();
    FeatureMap y(a.height(), a.width(), ca + cb);
    const size_t pixels = static_cast<size_t>(a.height()) * a.width();
    for (size_t p = 0; p < pixels; ++p) {
        for (int i = 0; i < ca; ++i) y.data()[p * (ca + cb) + i] = a.data()[p * ca + i];
        for (int i = 0; i < cb; ++i) y.data()[p * (ca + cb) + ca + i] = b.data()[p * cb + i];
    }
    return y;
}

void concat_channels_backward(const FeatureMap& gy, FeatureMap* ga, FeatureMap* gb) {
    const int ca = ga->channels(), cb = gb->channels();
    const size_t pixels = static_cast<size_t>(gy.height()) * gy.width();
    for (size_t p = 0; p < pixels; ++p) {
        for (int i = 0; i < ca; ++i) ga->data()[p * ca + i] += gy.data()[p * (ca + cb) + i];
        for (int i = 0; i < cb; ++i) gb->data()[p * cb + i] += gy.data()[p * (ca + cb) + ca + i];
    }
}

}  // namespace warpfuse::fusion
