#pragma once

#include <string>

#include "irbm/training.hpp"

namespace irbm::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Complete resumable state of a run.
struct Checkpoint {
  TrainConfig config;
  TrainingState state;

  bool operator==(const Checkpoint&) const = default;
};

/// Little-endian binary: "IRBM", u32 version, the training config as
/// key/value strings, dims, penalty, f64 row-major arrays, optimizer,
/// chains, regroup state, counters, and a trailing CRC-32 of everything
/// before it. Written to a temporary file and renamed into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws irbm::FormatError on bad magic, version, checksum or shape.
Checkpoint load_checkpoint(const std::string& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin);

}  // namespace irbm::cli
