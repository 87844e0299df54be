#pragma once

#include <cstdint>
#include <string>

#include "prunekit/model.hpp"

namespace prunekit {

// Everything a training run needs to resume or evaluate: the full model
// (including per-capacity normalization snapshots), the run seed, and an
// echo of the configuration text the run was launched with.
struct Checkpoint {
    std::string config_echo;
    std::uint64_t seed = 0;
    PrunableModel model;
};

// Little-endian binary, versioned, crc-sealed. Overwrites path.
void save_checkpoint(const std::string& path, const PrunableModel& model, std::uint64_t seed,
                     const std::string& config_echo);

// Throws DataError on bad magic, unsupported version, checksum mismatch,
// truncation, or shape inconsistencies.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prunekit
