#ifndef SMAC_CHECKPOINT_HPP
#define SMAC_CHECKPOINT_HPP

#include <string>

#include "layers.hpp"

namespace smac {

// Checkpoint = <stem>.bin (flat little-endian doubles) + <stem>.manifest
// (one "name shape offset count" line per entry). Parameters come first in
// registry order, then stat buffers (BN running stats).
void save_checkpoint(const std::string& stem, const ParamRegistry& registry);

// Restores values into an identically-structured registry; names and shapes
// must match the manifest exactly.
void load_checkpoint(const std::string& stem, ParamRegistry& registry);

} // namespace smac

#endif
