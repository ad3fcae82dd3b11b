#include "warpfuse/core/checksum.hpp"

#include <cstdio>

namespace warpfuse {

uint64_t fnv1a64(const void* data, size_t n_bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n_bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t checksum_doubles(const std::vector<double>& values) {
    return fnv1a64(values.data(), values.size() * sizeof(double));
}

std::string checksum_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace warpfuse
