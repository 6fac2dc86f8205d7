#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ick/network.hpp"

namespace ick {

// Layout: "ICK1", version u32, head_index u32, layer count u32, then per
// layer: kind u8, kind-specific hyperparameter u32s, parameter count u32, and
// per parameter rank u32, dims u32..., raw f32 row-major. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Network<float>& network);
Network<float> decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin = "buffer");

void save_checkpoint(const Network<float>& network, const std::filesystem::path& path);
Network<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace ick
