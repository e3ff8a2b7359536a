// Checkpoint container: magic "SEMW", u16 format version, then one record per
// tensor (u16 name length, UTF-8 name, u8 rank, u32 dims, little-endian f32
// payload). Round-trips bit-exactly.
#pragma once

#include <string>
#include <vector>

namespace semlink {

struct NamedTensorF32 {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<NamedTensorF32>& tensors);
std::vector<NamedTensorF32> read_checkpoint(const std::string& path);

}  // namespace semlink
