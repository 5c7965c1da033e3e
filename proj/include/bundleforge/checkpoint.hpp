#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bundleforge/tensor.hpp"

namespace bundleforge::checkpoint {

// Checkpoint container: magic "BNDC", u32 format version, u32 parameter
// count, then per parameter u32 name length + name bytes + u32 rows +
// u32 cols + row-major little-endian f32 data; a CRC32 of all preceding
// bytes is appended and verified on load.

inline constexpr std::uint32_t kFormatVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, num::Tensor<float>>>;

void save(const std::string& path, const NamedTensors& params);
NamedTensors load(const std::string& path);

}  // namespace bundleforge::checkpoint
