#pragma once

#include <cstdint>
#include <string>

namespace metapat {

inline constexpr const char* kVersion = "0.3.1";

/// Identifies the run that produced an output file.
struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash = "0000000000000000";

    std::string header_line() const {
        return std::string("# metapat ") + kVersion + " seed=" + std::to_string(seed) +
               " config=" + config_hash;
    }
};

} // namespace metapat
