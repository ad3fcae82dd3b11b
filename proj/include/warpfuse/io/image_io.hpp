#pragma once

#include <string>

#include "warpfuse/core/types.hpp"

namespace warpfuse::io {

// Loads an 8-bit grayscale PGM (P5, maxval 255) or an 8-bit gray / 24-bit RGB PNG.
// The format is sniffed from the file's magic bytes. Values are scaled to [0,1]
// (byte / 255). Returns a 1- or 3-channel map.
FeatureMap load_image(const std::string& path);

// Saves to PGM or PNG depending on the extension (.pgm / .png, case-insensitive).
// Values are clamped to [0,1] and rounded half-up to 8-bit; the return value is
// the number of samples that needed clamping. PGM accepts 1 channel, PNG 1 or 3.
int save_image(const FeatureMap& map, const std::string& path);
int save_image(const SaliencyMap& map, const std::string& path);

// Conversions between the single-channel containers.
SaliencyMap to_saliency(const FeatureMap& map);       // requires 1 channel
FeatureMap to_feature_map(const SaliencyMap& map);

}  // namespace warpfuse::io
