#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "distillgan/tensor.hpp"

namespace distillgan {

// In-memory image set, pixels in [-1, 1], stored N x C x H x W.
struct Dataset {
  std::string name;
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::vector<int> labels;  // empty, or one per image
  std::size_t num_classes = 0;

  std::size_t size() const;
  std::size_t image_numel() const { return channels * height * width; }
  // Throws ContractError if pixels or labels break the invariants.
  void validate() const;

  // Images at `indices` as a [k, C, H, W] tensor.
  TensorPtr<float> batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  // Images [first, first + count).
  TensorPtr<float> slice(std::size_t first, std::size_t count) const;
  // Split into [0, n) and [n, size()).
  std::pair<Dataset, Dataset> split(std::size_t n) const;
};

inline float byte_to_pixel(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }
std::uint8_t pixel_to_byte(float p);

// Area resampling of one C x H x W image: every output pixel is the mean of
// the source area it covers, with fractional weights at cell boundaries.
std::vector<float> area_resize(std::span<const float> image, std::size_t channels,
                               std::size_t height, std::size_t width, std::size_t out_size);

// Reads an IDX image file (magic 0x00000803, N x H x W or N x C x H x W
// unsigned bytes) and an optional label file (magic 0x00000801). A
// target_size of 0 keeps the stored resolution.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t target_size = 0);
Dataset load_idx(const std::filesystem::path& images, std::size_t target_size = 0);

// Parsers over in-memory bytes, used by the loaders above.
Dataset parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& name);

// Inverse of load_idx: pixels are mapped back to bytes with rounding. labels
// may be empty to skip the label file.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// Filled circles (label 0), squares (1) and crosses (2) with random position
// and scale, rendered with 4x4 supersampling. Labels are assigned round-robin.
Dataset synth_shapes(std::size_t n, std::size_t size, std::uint64_t seed);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace distillgan
