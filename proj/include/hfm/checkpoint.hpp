#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hfm/optim.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

// Binary checkpoint, all integers and floats little-endian:
//   "HFMCKPT1"  u32 version  u64 seed  u32 next_epoch  u64 optimizer_steps
//   u32 config_length  config text
//   u32 array_count, then per array:
//     u32 name_length  name  u32 rank  u32 dims[rank]  f32 values
//   u32 crc32 of every preceding byte
// Optimizer running averages are stored as arrays named "rmsprop.v/<param>".
struct Checkpoint {
  std::uint64_t seed = 0;
  int next_epoch = 0;  // epochs completed
  std::string config_text;
  Parameters params;
  std::map<std::string, std::vector<Scalar>> optimizer_state;
  std::uint64_t optimizer_steps = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& checkpoint);

// Throws DataError on a bad magic, version, truncation or checksum mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& file);

// Copies values from a loaded checkpoint into parameters built for the same
// configuration; names and shapes must match exactly.
void assign_parameters(Parameters& target, const Parameters& source);

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
