#include "warpfuse/fusion/toy.hpp"

#include <json.hpp>

#include <stdexcept>

#include "warpfuse/core/checksum.hpp"
#include "warpfuse/core/json_format.hpp"
#include "warpfuse/tps/tps.hpp"

namespace warpfuse::fusion {

namespace {

using nlohmann::json;

FeatureMap random_map(int h, int w, int c, Rng& rng) {
    FeatureMap m(h, w, c);
    for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
    return m;
}

void push_checksum(ToyResult* res, const std::string& stage, const std::vector<double>& values) {
    res->checksums.emplace_back(stage, checksum_hex(checksum_doubles(values)));
}

}  // namespace

ToyConfig parse_toy_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw IoError(std::string("toy config: ") + e.what());
    }
    if (!j.is_object()) throw IoError("toy config: top level must be an object");

    ToyConfig cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        auto want_int = [&]() -> int {
            if (!v.is_number_integer()) throw IoError("toy config: '" + key + "' must be an integer");
            return v.get<int>();
        };
        if (key == "input_size") cfg.input_size = want_int();
        else if (key == "c2") cfg.c2 = want_int();
        else if (key == "c3") cfg.c3 = want_int();
        else if (key == "c4") cfg.c4 = want_int();
        else if (key == "hidden") cfg.hidden = want_int();
        else if (key == "sgf_channels") cfg.sgf_channels = want_int();
        else if (key == "decoder_channels") cfg.decoder_channels = want_int();
        else if (key == "state_dim") cfg.state_dim = want_int();
        else if (key == "groups") cfg.groups = want_int();
        else if (key == "grid_rows") cfg.grid_rows = want_int();
        else if (key == "grid_cols") cfg.grid_cols = want_int();
        else if (key == "window") cfg.window = want_int();
        else if (key == "max_disp") {
            if (!v.is_number()) throw IoError("toy config: 'max_disp' must be a number");
            cfg.max_disp = v.get<double>();
        } else if (key == "seed") {
            if (!v.is_number_unsigned() && !v.is_number_integer()) {
                throw IoError("toy config: 'seed' must be an integer");
            }
            cfg.seed = v.get<uint64_t>();
        } else {
            throw IoError("toy config: unknown key '" + key + "'");
        }
    }
    validate_toy_config(cfg);
    return cfg;
}

void validate_toy_config(const ToyConfig& cfg) {
    // The coarsest level sits at input_size/16 and is scanned in stride-2
    // sub-grids, so it must be even: input_size is a positive multiple of 32.
    if (cfg.input_size < 32 || cfg.input_size % 32 != 0) {
        throw std::invalid_argument("toy config: input_size must be a positive multiple of 32");
    }
    if (cfg.c2 <= 0 || cfg.c3 <= 0 || cfg.c4 <= 0 || cfg.hidden <= 0 || cfg.sgf_channels <= 0 ||
        cfg.decoder_channels <= 0 || cfg.state_dim <= 0) {
        throw std::invalid_argument("toy config: sizes must be positive");
    }
    if (cfg.groups <= 0 || cfg.c2 % cfg.groups != 0 || cfg.c3 % cfg.groups != 0 ||
        cfg.c4 % cfg.groups != 0 || cfg.sgf_channels % cfg.groups != 0) {
        throw std::invalid_argument("toy config: level and mixer channels must be divisible by groups");
    }
    if (cfg.grid_rows < 2 || cfg.grid_cols < 2) {
        throw std::invalid_argument("toy config: control grid must be at least 2x2");
    }
    if (cfg.window <= 0 || (cfg.input_size / 16) % cfg.window != 0) {
        throw std::invalid_argument("toy config: window must divide the coarsest level size");
    }
    if (!(cfg.max_disp > 0.0) || cfg.max_disp > 1.0) {
        throw std::invalid_argument("toy config: max_disp must lie in (0, 1]");
    }
}

ToyWeights make_toy_weights(const ToyConfig& cfg, Rng& rng) {
    ToyWeights w;
    const std::array<int, 3> level_c = {cfg.c2, cfg.c3, cfg.c4};
    const int n_points = cfg.grid_rows * cfg.grid_cols;
    w.sccm = SccmWeights::make(cfg.c4, cfg.hidden, cfg.sgf_channels, cfg.groups, cfg.state_dim, rng);
    for (int i = 0; i < 3; ++i) w.guide[i] = ConvLayer::make(cfg.sgf_channels, level_c[i], 3, rng);
    for (int i = 0; i < 3; ++i) {
        w.tpsam[i] = TpsamWeights::make(level_c[i], n_points, cfg.groups, cfg.state_dim, cfg.window,
                                        cfg.max_disp, rng);
    }
    for (int i = 0; i < 3; ++i) {
        w.cmcm[i] = CmcmWeights::make(level_c[i], cfg.hidden, cfg.groups, cfg.state_dim, rng);
    }
    w.dec = DecodeWeights::make(level_c, cfg.decoder_channels, rng);
    return w;
}

ToyResult run_toy_forward(const ToyConfig& cfg) {
    validate_toy_config(cfg);
    Rng rng(cfg.seed);
    ToyWeights w = make_toy_weights(cfg, rng);

    const std::array<int, 3> level_c = {cfg.c2, cfg.c3, cfg.c4};
    const std::array<int, 3> level_s = {cfg.input_size / 4, cfg.input_size / 8,
                                        cfg.input_size / 16};
    std::array<FeatureMap, 3> f_rgb, f_t;
    for (int i = 0; i < 3; ++i) {
        f_rgb[i] = random_map(level_s[i], level_s[i], level_c[i], rng);
        f_t[i] = random_map(level_s[i], level_s[i], level_c[i], rng);
    }

    ToyResult res;
    FeatureMap sgf = sccm_forward(f_rgb[2], f_t[2], w.sccm);
    push_checksum(&res, "sgf", sgf.data());

    tps::ControlPointGrid grid = tps::make_control_grid(cfg.grid_rows, cfg.grid_cols);
    std::array<std::pair<FeatureMap, FeatureMap>, 3> fused;
    for (int i = 0; i < 3; ++i) {
        const std::string tag = "level" + std::to_string(i + 2);
        auto [fh_rgb, fh_t] = guide_features(sgf, f_rgb[i], f_t[i], w.guide[i]);
        push_checksum(&res, tag + ".guided_rgb", fh_rgb.data());
        push_checksum(&res, tag + ".guided_t", fh_t.data());

        TpsamOutput reg = tpsam_forward(fh_rgb, fh_t, w.tpsam[i], grid);
        std::vector<double> flat;
        flat.reserve(reg.displacements.deltas.size() * 2);
        for (const Vec2& d : reg.displacements.deltas) {
            flat.push_back(d.x);
            flat.push_back(d.y);
        }
        push_checksum(&res, tag + ".deltas", flat);
        push_checksum(&res, tag + ".warped_t", reg.warped_t.data());
        if (i == 0) {
            res.deltas_finest.reserve(reg.displacements.deltas.size());
            for (const Vec2& d : reg.displacements.deltas) res.deltas_finest.push_back({d.x, d.y});
        }

        fused[i] = cmcm_forward(fh_rgb, reg.warped_t, w.cmcm[i]);
        push_checksum(&res, tag + ".fused_rgb", fused[i].first.data());
        push_checksum(&res, tag + ".fused_t", fused[i].second.data());
    }

    res.prediction = decode(fused, w.dec);
    push_checksum(&res, "prediction", res.prediction.values);
    return res;
}

std::string toy_report_json(const ToyConfig& cfg, const ToyResult& res,
                            const std::vector<GradCheckReport>& grads) {
    std::string out = "{\n  \"config\": {";
    out += "\"input_size\": " + std::to_string(cfg.input_size);
    out += ", \"c2\": " + std::to_string(cfg.c2);
    out += ", \"c3\": " + std::to_string(cfg.c3);
    out += ", \"c4\": " + std::to_string(cfg.c4);
    out += ", \"hidden\": " + std::to_string(cfg.hidden);
    out += ", \"sgf_channels\": " + std::to_string(cfg.sgf_channels);
    out += ", \"decoder_channels\": " + std::to_string(cfg.decoder_channels);
    out += ", \"state_dim\": " + std::to_string(cfg.state_dim);
    out += ", \"groups\": " + std::to_string(cfg.groups);
    out += ", \"grid_rows\": " + std::to_string(cfg.grid_rows);
    out += ", \"grid_cols\": " + std::to_string(cfg.grid_cols);
    out += ", \"window\": " + std::to_string(cfg.window);
    out += ", \"max_disp\": " + format_double(cfg.max_disp);
    out += ", \"seed\": " + std::to_string(cfg.seed);
    out += "},\n  \"checksums\": {";
    for (size_t i = 0; i < res.checksums.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + res.checksums[i].first + "\": \"" + res.checksums[i].second + "\"";
    }
    out += "},\n  \"prediction\": {\"height\": " + std::to_string(res.prediction.height) +
           ", \"width\": " + std::to_string(res.prediction.width) + "},\n  \"deltas\": [";
    for (size_t i = 0; i < res.deltas_finest.size(); ++i) {
        if (i) out += ",";
        out += "[" + format_double(res.deltas_finest[i][0]) + "," +
               format_double(res.deltas_finest[i][1]) + "]";
    }
    out += "],\n  \"grad_checks\": [";
    for (size_t i = 0; i < grads.size(); ++i) {
        if (i) out += ", ";
        out += "{\"block\": \"" + grads[i].block + "\", \"params\": " +
               std::to_string(grads[i].param_count) + ", \"checked\": " +
               std::to_string(grads[i].checked) + ", \"max_rel_error\": " +
               format_double(grads[i].max_rel_error) + "}";
    }
    out += "]\n}\n";
    return out;
}

}  // namespace warpfuse::fusion
