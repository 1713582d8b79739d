#pragma once

#include <filesystem>
#include <vector>
#include <cstdint>
#include <span>

#include "dfss/network.hpp"

namespace dfss {

// Little-endian binary checkpoint, version 1:
//
//   offset  size      field
//   0       8         magic "DFSSCKPT"
//   8       4         u32 format version (1)
//   12      32        SHA-256 of canonical_spec_text(spec)
//   44      8         u64 parameter count P
//   52      4*P       f32 parameters, layer order; conv weight then bias,
//                     batch-norm gamma then beta
//   ...     4         u32 batch-norm layer count L
//   per BN  4+8*C     u32 channels C, f32 running_mean[C], f32 running_var[C]
//   ...     8         u64 initialization seed
//
// The file must end exactly after the seed.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Network& net);
Network deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                               const NetworkSpec& expected_spec);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
// The returned network is in eval mode. Throws FormatError on bad magic,
// version or digest mismatch, truncation or trailing bytes.
Network load_checkpoint(const std::filesystem::path& path,
                        const NetworkSpec& expected_spec);

}  // namespace dfss
