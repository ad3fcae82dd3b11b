#pragma once

#include <string>

#include "warpfuse/tps/tps.hpp"

namespace warpfuse::tps {

// JSON schema:
//   {"rows": R, "cols": C, "points": [[x,y],...],
//    "rbf_weights": [[wx,wy],...], "affine": [[..],[..],[..]]}
// Numbers are written with 17 significant digits so parameters round-trip exactly.
std::string serialize_parameters(const TpsParameters& params);
TpsParameters parse_parameters(const std::string& json_text);

// Grid-only schema: {"rows": R, "cols": C, "points": [[x,y],...]}.
std::string serialize_grid(const ControlPointGrid& grid);
ControlPointGrid parse_grid(const std::string& json_text);

// Target list schema: {"points": [[x,y],...]}.
std::string serialize_points(const std::vector<Vec2>& points);
std::vector<Vec2> parse_points(const std::string& json_text);

}  // namespace warpfuse::tps
