#pragma once

#include <cstdint>
#include <filesystem>

#include "cprec/models.hpp"

namespace cprec {

struct CheckpointMeta {
  std::uint64_t seed = 0;
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// A checkpoint is two files sharing a stem: `<stem>.json` (model kind, K,
// dims, seed, tensor shapes in declared order) and `<stem>.bin` with each
// tensor's values as little-endian IEEE-754 binary64, concatenated in the
// same order.
void save_checkpoint(const std::filesystem::path& stem, const ModelParams& params, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

}  // namespace cprec
