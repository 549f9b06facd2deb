#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tfnk {

// Binary checkpoint, little-endian:
//   magic "TFNK" | u32 version | u32 entry count
//   per entry: u16 name length | name bytes | u8 rank | u32 dims | f32 data
struct CheckpointEntry {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Exact on-disk size in bytes of the serialized form.
int64_t checkpoint_byte_size(const std::vector<CheckpointEntry>& entries);

}  // namespace tfnk
