#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace warpfuse {

// FNV-1a over raw bytes; stable across runs of the same build.
uint64_t fnv1a64(const void* data, size_t n_bytes);

uint64_t checksum_doubles(const std::vector<double>& values);

// Lower-case 16-hex-digit rendering, e.g. "9f5e3a..." .
std::string checksum_hex(uint64_t v);

}  // namespace warpfuse
