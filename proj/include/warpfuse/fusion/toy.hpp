#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "warpfuse/fusion/blocks.hpp"
#include "warpfuse/fusion/grad_check.hpp"

namespace warpfuse::fusion {

// Small three-level instantiation of the fusion network, driven entirely by one
// seed: weights are drawn first, then the synthetic feature pyramids, so equal
// configs give bit-identical runs.
struct ToyConfig {
    int input_size = 64;  // levels live at /4, /8, /16
    int c2 = 16;
    int c3 = 24;
    int c4 = 32;
    int hidden = 32;          // width inside the mixer and fusion branches
    int sgf_channels = 32;    // mixer output channels
    int decoder_channels = 16;
    int state_dim = 4;
    int groups = 4;
    int grid_rows = 4;
    int grid_cols = 4;
    int window = 4;
    double max_disp = 0.5;
    uint64_t seed = 0;
};

// Parses {"input_size": ..., ...}; every key optional, unknown keys rejected.
ToyConfig parse_toy_config(const std::string& json_text);
void validate_toy_config(const ToyConfig& cfg);

struct ToyWeights {
    SccmWeights sccm;
    std::array<ConvLayer, 3> guide;  // sgf_channels -> c_i per level, 3x3
    std::array<TpsamWeights, 3> tpsam;
    std::array<CmcmWeights, 3> cmcm;
    DecodeWeights dec;
};

ToyWeights make_toy_weights(const ToyConfig& cfg, Rng& rng);

struct ToyResult {
    SaliencyMap prediction;
    std::vector<std::array<double, 2>> deltas_finest;        // level-2 control offsets
    std::vector<std::pair<std::string, std::string>> checksums;  // (stage, hex), run order
};

ToyResult run_toy_forward(const ToyConfig& cfg);

// JSON report: config echo, stage checksums, and one entry per gradient check.
std::string toy_report_json(const ToyConfig& cfg, const ToyResult& res,
                            const std::vector<GradCheckReport>& grads);

}  // namespace warpfuse::fusion
