#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "distillgan/tensor.hpp"

namespace distillgan {

inline constexpr std::size_t kGridSeparator = 2;

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

// Tiles images [N, C, H, W] row-major into `cols` columns with white
// 2-pixel separators; pixels map [-1, 1] -> [0, 255].
Raster tile_grid(const Tensor<float>& images, std::size_t cols);

std::vector<std::uint8_t> encode_png(const Raster& raster);
// Binary PGM (gray) or PPM (RGB).
std::vector<std::uint8_t> encode_pnm(const Raster& raster);

// Writes PGM/PPM when the extension is .pgm/.ppm, PNG otherwise.
void export_grid(const Tensor<float>& images, std::size_t cols, const std::filesystem::path& path);

}  // namespace distillgan
