#include "warpfuse/tps/serialize.hpp"

#include <json.hpp>

#include "warpfuse/core/json_format.hpp"

namespace warpfuse::tps {

namespace {

using nlohmann::json;

std::string pair_list(const std::vector<Vec2>& v) {
    std::string out = "[";
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += "[" + format_double(v[i].x) + "," + format_double(v[i].y) + "]";
    }
    out += "]";
    return out;
}

json parse_object(const std::string& text, std::initializer_list<const char*> allowed) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("json parse error: ") + e.what());
    }
    if (!j.is_object()) throw IoError("json: expected an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                ok = true;
                break;
            }
        }
        if (!ok) throw IoError("json: unknown key '" + item.key() + "'");
    }
    return j;
}

std::vector<Vec2> read_pairs(const json& arr, const char* what) {
    if (!arr.is_array()) throw IoError(std::string("json: ") + what + " must be an array");
    std::vector<Vec2> out;
    out.reserve(arr.size());
    for (const auto& e : arr) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
            throw IoError(std::string("json: ") + what + " entries must be [x,y] pairs");
        }
        out.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    return out;
}

}  // namespace

std::string serialize_parameters(const TpsParameters& params) {
    if (params.kernel != TpsKernel::kSquaredLog) {
        throw std::invalid_argument("serialize_parameters: only the default kernel is serializable");
    }
    std::string out = "{\"rows\":" + std::to_string(params.source.rows) +
                      ",\"cols\":" + std::to_string(params.source.cols) +
                      ",\"points\":" + pair_list(params.source.points) +
                      ",\"rbf_weights\":" + pair_list(params.rbf_weights) + ",\"affine\":[";
    for (int r = 0; r < 3; ++r) {
        if (r) out += ",";
        out += "[" + format_double(params.affine[r].x) + "," + format_double(params.affine[r].y) + "]";
    }
    out += "]}";
    return out;
}

TpsParameters parse_parameters(const std::string& json_text) {
    const json j = parse_object(json_text, {"rows", "cols", "points", "rbf_weights", "affine"});
    for (const char* key : {"rows", "cols", "points", "rbf_weights", "affine"}) {
        if (!j.contains(key)) throw IoError(std::string("json: missing key '") + key + "'");
    }
    TpsParameters p;
    p.source.rows = j["rows"].get<int>();
    p.source.cols = j["cols"].get<int>();
    p.source.points = read_pairs(j["points"], "points");
    p.rbf_weights = read_pairs(j["rbf_weights"], "rbf_weights");
    const std::vector<Vec2> aff = read_pairs(j["affine"], "affine");
    if (aff.size() != 3) throw IoError("json: affine must hold exactly 3 rows");
    for (int r = 0; r < 3; ++r) p.affine[r] = aff[r];
    validate_grid(p.source);
    if (p.rbf_weights.size() != p.source.points.size()) {
        throw IoError("json: rbf_weights count does not match points");
    }
    for (const Vec2& v : p.rbf_weights) {
        if (!v.finite()) throw std::invalid_argument("json: non-finite rbf weight");
    }
    for (int r = 0; r < 3; ++r) {
        if (!p.affine[r].finite()) throw std::invalid_argument("json: non-finite affine entry");
    }
    return p;
}

std::string serialize_grid(const ControlPointGrid& grid) {
    return "{\"rows\":" + std::to_string(grid.rows) + ",\"cols\":" + std::to_string(grid.cols) +
           ",\"points\":" + pair_list(grid.points) + "}";
}

ControlPointGrid parse_grid(const std::string& json_text) {
    const json j = parse_object(json_text, {"rows", "cols", "points"});
    for (const char* key : {"rows", "cols", "points"}) {
        if (!j.contains(key)) throw IoError(std::string("json: missing key '") + key + "'");
    }
    ControlPointGrid g;
    g.rows = j["rows"].get<int>();
    g.cols = j["cols"].get<int>();
    g.points = read_pairs(j["points"], "points");
    validate_grid(g);
    return g;
}

std::string serialize_points(const std::vector<Vec2>& points) {
    return "{\"points\":" + pair_list(points) + "}";
}

std::vector<Vec2> parse_points(const std::string& json_text) {
    const json j = parse_object(json_text, {"points"});
    if (!j.contains("points")) throw IoError("json: missing key 'points'");
    return read_pairs(j["points"], "points");
}

}  // namespace warpfuse::tps
