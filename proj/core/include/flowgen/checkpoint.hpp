// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "flowgen/net.hpp"

namespace flowgen {

// Versioned binary container: magic + JSON header (format version, net
// hyperparameters, training seed, step counter, RNG stream state) followed
// by the named parameter arrays as raw little-endian doubles. Round-trips
// bit-exactly; the layout is documented in the README.
struct LoadedCheckpoint {
    VelocityNet net;
    std::uint64_t seed = 0;
    std::size_t step = 0;
    std::string rng_state;
};

void save_checkpoint(const std::string& path, const VelocityNet& net, std::uint64_t seed,
                     std::size_t step, const std::string& rng_state);

// Throws FormatError when the file is malformed or describes a net this
// build cannot construct.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace flowgen
