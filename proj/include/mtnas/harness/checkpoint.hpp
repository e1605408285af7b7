#pragma once

// Checkpoint file layout:
//   8 bytes   magic "MTNASCKP"
//   uint32    format version (little-endian)
//   uint64    header length in bytes (little-endian)
//   header    JSON: config snapshot, epoch, RNG state, early-stop state,
//             history, and an index of named tensors into the payload
//   payload   IEEE-754 doubles, little-endian
//
// Parameters, optimizer moments and the best-epoch snapshot are stored by
// parameter name, so a reloaded run continues bit-identically.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "mtnas/harness/config.hpp"

namespace mtnas::harness {

inline constexpr char kCheckpointMagic[8] = {'M', 'T', 'N', 'A', 'S', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, Experiment& experiment);
/// Rebuilds the experiment from the stored configuration and restores all
/// state. Throws ParseError on a malformed or foreign file.
std::unique_ptr<Experiment> load_checkpoint(const std::filesystem::path& path);

/// The configuration stored in a checkpoint header.
ExperimentConfig checkpoint_config(const std::filesystem::path& path);

/// Writes `content` to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace mtnas::harness
