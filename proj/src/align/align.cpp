#include "warpfuse/align/align.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "warpfuse/core/json_format.hpp"
#include "warpfuse/core/rng.hpp"
#include "warpfuse/tps/serialize.hpp"
#include "warpfuse/tps/warp.hpp"

namespace warpfuse::align {

namespace {

constexpr double kMinOverlap = 0.1;
constexpr double kStepFloor = 1.0e-3;
constexpr double kVarianceFloor = 1.0e-18;
constexpr int kPyramidLevels = 3;
constexpr int kMinLevelSize = 8;

void validate_pair(const FeatureMap& ref, const FeatureMap& mov) {
    if (ref.empty() || mov.empty()) throw std::invalid_argument("align: empty image");
    if (!ref.same_shape(mov)) throw std::invalid_argument("align: image shapes differ");
    if (ref.height() < 16 || ref.width() < 16) {
        throw std::invalid_argument("align: images must be at least 16x16");
    }
    for (const FeatureMap* img : {&ref, &mov}) {
        for (double v : img->data()) {
            if (!std::isfinite(v)) throw std::invalid_argument("align: non-finite image sample");
        }
    }
}

void validate_displacements(const Displacements& d) {
    tps::validate_grid(d.grid);
    if (d.deltas.size() != d.grid.points.size()) {
        throw std::invalid_argument("Displacements: delta count does not match grid");
    }
    for (const Vec2& v : d.deltas) {
        if (!v.finite()) throw std::invalid_argument("Displacements: non-finite delta");
    }
}

double objective_for(const tps::TpsSolver& solver, const FeatureMap& ref, const FeatureMap& mov,
                     const std::vector<Vec2>& deltas, double lambda_bend) {
    std::vector<Vec2> targets(solver.grid().points);
    for (size_t i = 0; i < targets.size(); ++i) targets[i] = targets[i] + deltas[i];
    const tps::TpsParameters params = solver.solve(targets);

    std::vector<uint8_t> mask;
    const FeatureMap warped =
        tps::sample_bilinear(mov, tps::make_warp_field(params, ref.width(), ref.height()), &mask);

    size_t inside = 0;
    for (uint8_t m : mask) inside += m;
    const double frac = static_cast<double>(inside) / static_cast<double>(mask.size());
    if (frac < kMinOverlap) return 2.0 + (kMinOverlap - frac);

    return (1.0 - ncc(ref, warped, mask)) + lambda_bend * tps::bending_energy(params);
}

}  // namespace

std::string serialize_displacements(const Displacements& d) {
    std::string out = "{\"grid\":" + tps::serialize_grid(d.grid) + ",\"deltas\":[";
    for (size_t i = 0; i < d.deltas.size(); ++i) {
        if (i) out += ",";
        out += "[" + format_double(d.deltas[i].x) + "," + format_double(d.deltas[i].y) + "]";
    }
    out += "]}";
    return out;
}

Displacements parse_displacements(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("json parse error: ") + e.what());
    }
    if (!j.is_object() || !j.contains("grid") || !j.contains("deltas")) {
        throw IoError("displacements json: need keys 'grid' and 'deltas'");
    }
    for (const auto& item : j.items()) {
        if (item.key() != "grid" && item.key() != "deltas") {
            throw IoError("displacements json: unknown key '" + item.key() + "'");
        }
    }
    Displacements d;
    d.grid = tps::parse_grid(j["grid"].dump());
    for (const auto& e : j["deltas"]) {
        if (!e.is_array() || e.size() != 2) throw IoError("displacements json: bad delta entry");
        d.deltas.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    validate_displacements(d);
    return d;
}

double ncc(const FeatureMap& a, const FeatureMap& b, const std::vector<uint8_t>& mask) {
    if (!a.same_shape(b)) throw std::invalid_argument("ncc: shapes differ");
    if (mask.size() != static_cast<size_t>(a.height()) * a.width()) {
        throw std::invalid_argument("ncc: mask size mismatch");
    }
    const int c = a.channels();
    double sum_a = 0.0, sum_b = 0.0;
    size_t n = 0;
    for (size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        for (int ch = 0; ch < c; ++ch) {
            sum_a += a.data()[p * c + ch];
            sum_b += b.data()[p * c + ch];
        }
        ++n;
    }
    if (n == 0) return 0.0;
    const double count = static_cast<double>(n) * c;
    const double mean_a = sum_a / count;
    const double mean_b = sum_b / count;

    double cross = 0.0, var_a = 0.0, var_b = 0.0;
    for (size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        for (int ch = 0; ch < c; ++ch) {
            const double da = a.data()[p * c + ch] - mean_a;
            const double db = b.data()[p * c + ch] - mean_b;
            cross += da * db;
            var_a += da * da;
            var_b += db * db;
        }
    }
    if (var_a < kVarianceFloor || var_b < kVarianceFloor) return 0.0;
    return cross / std::sqrt(var_a * var_b);
}

double alignment_objective(const FeatureMap& ref, const FeatureMap& mov, const Displacements& d,
                           double lambda_bend) {
    validate_pair(ref, mov);
    validate_displacements(d);
    if (lambda_bend < 0.0 || !std::isfinite(lambda_bend)) {
        throw std::invalid_argument("alignment_objective: lambda_bend must be finite and >= 0");
    }
    const tps::TpsSolver solver(d.grid);
    return objective_for(solver, ref, mov, d.deltas, lambda_bend);
}

FeatureMap downsample2(const FeatureMap& img) {
    const int h = img.height() / 2;
    const int w = img.width() / 2;
    const int c = img.channels();
    FeatureMap out(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                out.at(y, x, ch) = 0.25 * (img.at(2 * y, 2 * x, ch) + img.at(2 * y, 2 * x + 1, ch) +
                                           img.at(2 * y + 1, 2 * x, ch) +
                                           img.at(2 * y + 1, 2 * x + 1, ch));
            }
        }
    }
    return out;
}

AlignResult optimize_displacements(const FeatureMap& ref, const FeatureMap& mov,
                                   const tps::ControlPointGrid& grid, const AlignConfig& cfg) {
    validate_pair(ref, mov);
    tps::validate_grid(grid);
    if (cfg.max_disp <= 0.0 || cfg.step0 <= 0.0 || cfg.max_iters < 1 || cfg.tol <= 0.0 ||
        cfg.tol >= 1.0 || cfg.lambda_bend < 0.0) {
        throw std::invalid_argument("optimize_displacements: bad config");
    }

    // Coarse-to-fine image stack; levels below the minimum usable size are skipped.
    std::vector<FeatureMap> ref_pyr{ref};
    std::vector<FeatureMap> mov_pyr{mov};
    for (int l = 1; l < kPyramidLevels; ++l) {
        const FeatureMap& prev = ref_pyr.back();
        if (prev.height() / 2 < kMinLevelSize || prev.width() / 2 < kMinLevelSize) break;
        ref_pyr.push_back(downsample2(ref_pyr.back()));
        mov_pyr.push_back(downsample2(mov_pyr.back()));
    }

    const tps::TpsSolver solver(grid);
    const int n_coords = grid.count() * 2;
    std::vector<Vec2> deltas(grid.points.size(), Vec2{0.0, 0.0});
    Rng rng(cfg.seed);

    AlignResult result;
    result.initial_objective =
        objective_for(solver, ref_pyr[0], mov_pyr[0], deltas, cfg.lambda_bend);

    auto coord_ref = [&](int j) -> double& {
        return (j % 2 == 0) ? deltas[j / 2].x : deltas[j / 2].y;
    };

    for (int level = static_cast<int>(ref_pyr.size()) - 1; level >= 0; --level) {
        const FeatureMap& r = ref_pyr[level];
        const FeatureMap& m = mov_pyr[level];
        std::vector<double> step(n_coords, cfg.step0);
        double cur = objective_for(solver, r, m, deltas, cfg.lambda_bend);

        std::vector<int> order(n_coords);
        std::iota(order.begin(), order.end(), 0);

        for (int sweep = 0; sweep < cfg.max_iters; ++sweep) {
            rng.shuffle(order);
            const double sweep_start = cur;
            bool improved = false;

            for (int j : order) {
                if (step[j] < kStepFloor) continue;
                double& coord = coord_ref(j);
                const double saved = coord;
                bool accepted = false;
                for (double dir : {1.0, -1.0}) {
                    const double cand =
                        std::clamp(saved + dir * step[j], -cfg.max_disp, cfg.max_disp);
                    if (cand == saved) continue;
                    coord = cand;
                    const double obj = objective_for(solver, r, m, deltas, cfg.lambda_bend);
                    if (obj < cur) {
                        cur = obj;
                        // Traced only at full resolution; coarse-level objectives
                        // live on different images and are not comparable.
                        if (level == 0) result.accepted_objectives.push_back(obj);
                        accepted = true;
                        improved = true;
                        break;
                    }
                    coord = saved;
                }
                if (!accepted) step[j] *= 0.5;
            }

            const bool steps_exhausted =
                std::all_of(step.begin(), step.end(), [](double s) { return s < kStepFloor; });
            if (steps_exhausted) break;
            if (improved &&
                sweep_start - cur < cfg.tol * std::max(std::abs(sweep_start), 1.0e-12)) {
                break;
            }
        }
    }

    result.final_objective =
        objective_for(solver, ref_pyr[0], mov_pyr[0], deltas, cfg.lambda_bend);
    result.displacements.grid = grid;
    result.displacements.deltas = std::move(deltas);
    return result;
}

}  // namespace warpfuse::align
