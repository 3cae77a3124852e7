#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "distillgan/network.hpp"

namespace distillgan {

// Binary layout, integers and floats little-endian:
//
//   "DGCK"  u32 version
//   spec:   u8 role, u8 critic_mode, u32 image_size, u32 image_channels,
//           u32 depth_scale, u32 latent_dim, u32 num_classes
//   u64 weight count, f32 weights (registry order)
//   u64 buffer count, f32 batchnorm running means/variances
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Network& net);
Network deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace distillgan
