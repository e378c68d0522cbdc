#pragma once

#include <string>

#include "sealkit/training.hpp"

namespace sealkit {

/// Binary checkpoint: magic+version header, arch block, named tensor table
/// (little-endian float32), optimizer moments, rng state and stage counters,
/// CRC-32 integrity trailer. Save/load round trips are bit-exact; a version
/// mismatch or any byte corruption is rejected with DataError.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace sealkit
