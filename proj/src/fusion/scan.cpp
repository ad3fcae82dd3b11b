#include "warpfuse/fusion/scan.hpp"

#include <cmath>
#include <stdexcept>

#include "warpfuse/fusion/layers.hpp"

namespace warpfuse::fusion {

namespace {

constexpr int kBlockLen = 16;

void check_sequence(const std::vector<double>& x, int t_len, const ScanParams& p) {
    validate_scan_params(p);
    if (t_len < 0 || x.size() != static_cast<size_t>(t_len) * p.channels) {
        throw std::invalid_argument("scan: sequence length does not match channel count");
    }
}

// Gathers one stride-2 sub-grid (offset ry, rx) as a row-major sequence.
std::vector<double> gather_subgrid(const FeatureMap& x, int ry, int rx) {
    const int sh = x.height() / 2, sw = x.width() / 2, c = x.channels();
    std::vector<double> seq(static_cast<size_t>(sh) * sw * c);
    size_t t = 0;
    for (int i = 0; i < sh; ++i) {
        for (int j = 0; j < sw; ++j, ++t) {
            for (int ch = 0; ch < c; ++ch) {
                seq[t * c + ch] = x.at(2 * i + ry, 2 * j + rx, ch);
            }
        }
    }
    return seq;
}

std::vector<double> reversed_sequence(const std::vector<double>& x, int t_len, int c) {
    std::vector<double> out(x.size());
    for (int t = 0; t < t_len; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            out[static_cast<size_t>(t) * c + ch] = x[static_cast<size_t>(t_len - 1 - t) * c + ch];
        }
    }
    return out;
}

}  // namespace

ScanParams ScanParams::make(int channels, int state_dim, Rng& rng) {
    ScanParams p = zeros(channels, state_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(state_dim));
    for (double& v : p.a) v = rng.uniform(0.5, 0.99);
    for (double& v : p.b) v = rng.uniform(-bound, bound);
    for (double& v : p.c) v = rng.uniform(-bound, bound);
    return p;
}

ScanParams ScanParams::zeros(int channels, int state_dim) {
    if (channels < 1 || state_dim < 1) throw std::invalid_argument("scan: bad dimensions");
    ScanParams p;
    p.channels = channels;
    p.state_dim = state_dim;
    p.a.assign(static_cast<size_t>(channels) * state_dim, 0.0);
    p.b.assign(static_cast<size_t>(channels) * state_dim, 0.0);
    p.c.assign(static_cast<size_t>(channels) * state_dim, 0.0);
    return p;
}

void ScanParams::collect(std::vector<double*>& out) {
    for (double& v : a) out.push_back(&v);
    for (double& v : b) out.push_back(&v);
    for (double& v : c) out.push_back(&v);
}

void validate_scan_params(const ScanParams& p) {
    const size_t n = static_cast<size_t>(p.channels) * p.state_dim;
    if (p.channels < 1 || p.state_dim < 1 || p.a.size() != n || p.b.size() != n ||
        p.c.size() != n) {
        throw std::invalid_argument("scan: malformed parameters");
    }
    for (double v : p.a) {
        if (!(v >= 0.0 && v < 1.0)) {
            throw std::invalid_argument("scan: decay coefficients must lie in [0, 1)");
        }
    }
}

std::vector<double> selective_scan(const std::vector<double>& x, int t_len, const ScanParams& p) {
    check_sequence(x, t_len, p);
    const int c = p.channels, s = p.state_dim;
    std::vector<double> h(static_cast<size_t>(c) * s, 0.0);
    std::vector<double> y(x.size(), 0.0);
    for (int t = 0; t < t_len; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            const double xv = x[static_cast<size_t>(t) * c + ch];
            const size_t base = static_cast<size_t>(ch) * s;
            double out = 0.0;
            for (int k = 0; k < s; ++k) {
                h[base + k] = p.a[base + k] * h[base + k] + p.b[base + k] * xv;
                out += p.c[base + k] * h[base + k];
            }
            y[static_cast<size_t>(t) * c + ch] = out;
        }
    }
    return y;
}

std::vector<double> selective_scan_blocked(const std::vector<double>& x, int t_len,
                                           const ScanParams& p) {
    check_sequence(x, t_len, p);
    const int c = p.channels, s = p.state_dim;
    const size_t cs = static_cast<size_t>(c) * s;
    const int n_blocks = (t_len + kBlockLen - 1) / kBlockLen;

    // Pass 1: per-block summaries h_out = decay (.) h_in + contrib, from local
    // recurrences started at zero state.
    std::vector<double> decay(static_cast<size_t>(n_blocks) * cs);
    std::vector<double> contrib(static_cast<size_t>(n_blocks) * cs, 0.0);
    for (int bk = 0; bk < n_blocks; ++bk) {
        const int t0 = bk * kBlockLen;
        const int t1 = std::min(t0 + kBlockLen, t_len);
        double* dk = &decay[static_cast<size_t>(bk) * cs];
        double* ck = &contrib[static_cast<size_t>(bk) * cs];
        for (size_t i = 0; i < cs; ++i) dk[i] = 1.0;
        for (int t = t0; t < t1; ++t) {
            for (int ch = 0; ch < c; ++ch) {
                const double xv = x[static_cast<size_t>(t) * c + ch];
                const size_t base = static_cast<size_t>(ch) * s;
                for (int k = 0; k < s; ++k) {
                    dk[base + k] *= p.a[base + k];
                    ck[base + k] = p.a[base + k] * ck[base + k] + p.b[base + k] * xv;
                }
            }
        }
    }

    // Pass 2: chain the summaries to find every block's entry state, then
    // replay each block from its entry state.
    std::vector<double> y(x.size(), 0.0);
    std::vector<double> h_in(cs, 0.0);
    std::vector<double> h(cs);
    for (int bk = 0; bk < n_blocks; ++bk) {
        const int t0 = bk * kBlockLen;
        const int t1 = std::min(t0 + kBlockLen, t_len);
        h = h_in;
        for (int t = t0; t < t1; ++t) {
            for (int ch = 0; ch < c; ++ch) {
                const double xv = x[static_cast<size_t>(t) * c + ch];
                const size_t base = static_cast<size_t>(ch) * s;
                double out = 0.0;
                for (int k = 0; k < s; ++k) {
                    h[base + k] = p.a[base + k] * h[base + k] + p.b[base + k] * xv;
                    out += p.c[base + k] * h[base + k];
                }
                y[static_cast<size_t>(t) * c + ch] = out;
            }
        }
        const double* dk = &decay[static_cast<size_t>(bk) * cs];
        const double* ck = &contrib[static_cast<size_t>(bk) * cs];
        for (size_t i = 0; i < cs; ++i) h_in[i] = dk[i] * h_in[i] + ck[i];
    }
    return y;
}

void selective_scan_backward(const std::vector<double>& x, int t_len, const ScanParams& p,
                             const std::vector<double>& gy, std::vector<double>* gx,
                             ScanParams* gp) {
    check_sequence(x, t_len, p);
    if (gy.size() != x.size()) throw std::invalid_argument("scan backward: gradient size mismatch");
    const int c = p.channels, s = p.state_dim;
    const size_t cs = static_cast<size_t>(c) * s;

    // Forward replay caching every state.
    std::vector<double> states(static_cast<size_t>(t_len) * cs, 0.0);
    std::vector<double> h(cs, 0.0);
    for (int t = 0; t < t_len; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            const double xv = x[static_cast<size_t>(t) * c + ch];
            const size_t base = static_cast<size_t>(ch) * s;
            for (int k = 0; k < s; ++k) {
                h[base + k] = p.a[base + k] * h[base + k] + p.b[base + k] * xv;
            }
        }
        std::copy(h.begin(), h.end(), states.begin() + static_cast<size_t>(t) * cs);
    }

    std::vector<double> dh(cs, 0.0);
    for (int t = t_len - 1; t >= 0; --t) {
        const double* ht = &states[static_cast<size_t>(t) * cs];
        const double* hprev = t > 0 ? &states[static_cast<size_t>(t - 1) * cs] : nullptr;
        for (int ch = 0; ch < c; ++ch) {
            const double g = gy[static_cast<size_t>(t) * c + ch];
            const double xv = x[static_cast<size_t>(t) * c + ch];
            const size_t base = static_cast<size_t>(ch) * s;
            double gxv = 0.0;
            for (int k = 0; k < s; ++k) {
                const size_t i = base + k;
                dh[i] += g * p.c[i];
                gp->c[i] += g * ht[i];
                gp->a[i] += dh[i] * (hprev ? hprev[i] : 0.0);
                gp->b[i] += dh[i] * xv;
                gxv += dh[i] * p.b[i];
                dh[i] *= p.a[i];
            }
            if (gx) (*gx)[static_cast<size_t>(t) * c + ch] += gxv;
        }
    }
}

FeatureMap es2d(const FeatureMap& x, const ScanParams& p) {
    validate_scan_params(p);
    if (x.height() % 2 != 0 || x.width() % 2 != 0) {
        throw std::invalid_argument("es2d: spatial dimensions must be even");
    }
    if (x.channels() != p.channels) throw std::invalid_argument("es2d: channel mismatch");

    const int sh = x.height() / 2, sw = x.width() / 2, c = x.channels();
    const int t_len = sh * sw;
    FeatureMap y = zeros_like(x);
    for (int ry = 0; ry < 2; ++ry) {
        for (int rx = 0; rx < 2; ++rx) {
            const std::vector<double> seq = gather_subgrid(x, ry, rx);
            const std::vector<double> fwd = selective_scan_blocked(seq, t_len, p);
            const std::vector<double> rev_in = reversed_sequence(seq, t_len, c);
            const std::vector<double> rev_out = selective_scan_blocked(rev_in, t_len, p);
            size_t t = 0;
            for (int i = 0; i < sh; ++i) {
                for (int j = 0; j < sw; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        const double back = rev_out[(static_cast<size_t>(t_len) - 1 - t) * c + ch];
                        y.at(2 * i + ry, 2 * j + rx, ch) =
                            0.5 * (fwd[t * c + ch] + back);
                    }
                }
            }
        }
    }
    return y;
}

void es2d_backward(const FeatureMap& x, const ScanParams& p, const FeatureMap& gy, FeatureMap* gx,
                   ScanParams* gp) {
    const int sh = x.height() / 2, sw = x.width() / 2, c = x.channels();
    const int t_len = sh * sw;
    for (int ry = 0; ry < 2; ++ry) {
        for (int rx = 0; rx < 2; ++rx) {
            const std::vector<double> seq = gather_subgrid(x, ry, rx);
            std::vector<double> gseq(seq.size());
            size_t t = 0;
            for (int i = 0; i < sh; ++i) {
                for (int j = 0; j < sw; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        gseq[t * c + ch] = 0.5 * gy.at(2 * i + ry, 2 * j + rx, ch);
                    }
                }
            }

            std::vector<double> gin(seq.size(), 0.0);
            selective_scan_backward(seq, t_len, p, gseq, &gin, gp);

            const std::vector<double> rev_in = reversed_sequence(seq, t_len, c);
            const std::vector<double> grev = reversed_sequence(gseq, t_len, c);
            std::vector<double> gin_rev(seq.size(), 0.0);
            selective_scan_backward(rev_in, t_len, p, grev, &gin_rev, gp);
            const std::vector<double> gin_back = reversed_sequence(gin_rev, t_len, c);

            t = 0;
            for (int i = 0; i < sh; ++i) {
                for (int j = 0; j < sw; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        gx->at(2 * i + ry, 2 * j + rx, ch) +=
                            gin[t * c + ch] + gin_back[t * c + ch];
                    }
                }
            }
        }
    }
}

FeatureMap lssm(const FeatureMap& x, const ScanParams& p, int win) {
    validate_scan_params(p);
    if (win < 1 || x.height() % win != 0 || x.width() % win != 0) {
        throw std::invalid_argument("lssm: window must divide both spatial dimensions");
    }
    if (x.channels() != p.channels) throw std::invalid_argument("lssm: channel mismatch");

    const int c = x.channels();
    const int wy = x.height() / win, wx = x.width() / win;
    const int t_win = win * win;
    const int n_win = wy * wx;
    FeatureMap y = zeros_like(x);

    std::vector<double> means(static_cast<size_t>(n_win) * c, 0.0);
    std::vector<double> seq(static_cast<size_t>(t_win) * c);
    for (int by = 0; by < wy; ++by) {
        for (int bx = 0; bx < wx; ++bx) {
            const int k = by * wx + bx;
            size_t t = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        const double v = x.at(by * win + i, bx * win + j, ch);
                        seq[t * c + ch] = v;
                        means[static_cast<size_t>(k) * c + ch] += v;
                    }
                }
            }
            const std::vector<double> out = selective_scan_blocked(seq, t_win, p);
            t = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        y.at(by * win + i, bx * win + j, ch) = out[t * c + ch];
                    }
                }
            }
        }
    }
    for (double& v : means) v /= static_cast<double>(t_win);

    const std::vector<double> cross = selective_scan_blocked(means, n_win, p);
    for (int by = 0; by < wy; ++by) {
        for (int bx = 0; bx < wx; ++bx) {
            const int k = by * wx + bx;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    for (int ch = 0; ch < c; ++ch) {
                        y.at(by * win + i, bx * win + j, ch) +=
                            cross[static_cast<size_t>(k) * c + ch];
                    }
                }
            }
        }
    }
    return y;
}

void lssm_backward(const FeatureMap& x, const ScanParams& p, int win, const FeatureMap& gy,
                   FeatureMap* gx, ScanParams* gp) {
    const int c = x.channels();
    const int wy = x.height() / win, wx = x.width() / win;
    const int t_win = win * win;
    const int n_win = wy * wx;

    // Cross pass: the broadcast sums the upstream gradient over each window.
    std::vector<double> means(static_cast<size_t>(n_win) * c, 0.0);
    std::vector<double> gcross(static_cast<size_t>(n_win) * c, 0.0);
    for (int by = 0; by < wy; ++by) {
        for (int bx = 0; bx < wx; ++bx) {
            const int k = by * wx + bx;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    for (int ch = 0; ch < c; ++ch) {
                        means[static_cast<size_t>(k) * c + ch] +=
                            x.at(by * win + i, bx * win + j, ch);
                        gcross[static_cast<size_t>(k) * c + ch] +=
                            gy.at(by * win + i, bx * win + j, ch);
                    }
                }
            }
        }
    }
    for (double& v : means) v /= static_cast<double>(t_win);

    std::vector<double> gmeans(means.size(), 0.0);
    selective_scan_backward(means, n_win, p, gcross, &gmeans, gp);
    for (int by = 0; by < wy; ++by) {
        for (int bx = 0; bx < wx; ++bx) {
            const int k = by * wx + bx;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    for (int ch = 0; ch < c; ++ch) {
                        gx->at(by * win + i, bx * win + j, ch) +=
                            gmeans[static_cast<size_t>(k) * c + ch] / static_cast<double>(t_win);
                    }
                }
            }
        }
    }

    // Within-window passes.
    std::vector<double> seq(static_cast<size_t>(t_win) * c);
    std::vector<double> gseq(static_cast<size_t>(t_win) * c);
    for (int by = 0; by < wy; ++by) {
        for (int bx = 0; bx < wx; ++bx) {
            size_t t = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        seq[t * c + ch] = x.at(by * win + i, bx * win + j, ch);
                        gseq[t * c + ch] = gy.at(by * win + i, bx * win + j, ch);
                    }
                }
            }
            std::vector<double> gin(seq.size(), 0.0);
            selective_scan_backward(seq, t_win, p, gseq, &gin, gp);
            t = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j, ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        gx->at(by * win + i, bx * win + j, ch) += gin[t * c + ch];
                    }
                }
            }
        }
    }
}

}  // namespace warpfuse::fusion
