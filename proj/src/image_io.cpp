#include "distillgan/image_io.hpp"

#include <string>

#include <zlib.h>

#include "distillgan/dataset.hpp"
#include "distillgan/error.hpp"

namespace distillgan {

Raster tile_grid(const Tensor<float>& images, std::size_t cols) {
  if (images.rank() != 4) throw ShapeError("tile_grid expects [N, C, H, W], got " + shape_str(images.shape));
  if (cols == 0) throw ContractError("tile_grid needs cols >= 1");
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (c != 1 && c != 3) throw ShapeError("tile_grid supports 1 or 3 channels");
  const std::size_t used_cols = std::min(cols, n);
  const std::size_t rows = (n + cols - 1) / cols;
  Raster r;
  r.channels = c;
  r.width = used_cols * w + (used_cols - 1) * kGridSeparator;
  r.height = rows * h + (rows - 1) * kGridSeparator;
  r.pixels.assign(r.width * r.height * c, 255);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ox = (i % cols) * (w + kGridSeparator);
    const std::size_t oy = (i / cols) * (h + kGridSeparator);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          r.pixels[((oy + y) * r.width + ox + x) * c + ch] =
              pixel_to_byte(images.data[((i * c + ch) * h + y) * w + x]);
        }
  }
  return r;
}

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& r) {
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(r.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(r.height));
  ihdr.push_back(8);                       // bit depth
  ihdr.push_back(r.channels == 3 ? 2 : 0);  // truecolor or grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);

  // Filter type 0 on every scanline.
  const std::size_t stride = r.width * r.channels;
  std::vector<std::uint8_t> raw;
  raw.reserve(r.height * (stride + 1));
  for (std::size_t y = 0; y < r.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), r.pixels.begin() + static_cast<std::ptrdiff_t>(y * stride),
               r.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * stride));
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> idat(len);
  if (compress2(idat.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw IoError("png: zlib compression failed");
  }
  idat.resize(len);
  put_chunk(out, "IDAT", idat);
  put_chunk(out, "IEND", {});
  return out;
}

std::vector<std::uint8_t> encode_pnm(const Raster& r) {
  const std::string header = std::string(r.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  return out;
}

void export_grid(const Tensor<float>& images, std::size_t cols, const std::filesystem::path& path) {
  const Raster r = tile_grid(images, cols);
  const std::string ext = path.extension().string();
  write_file(path, ext == ".pgm" || ext == ".ppm" ? encode_pnm(r) : encode_png(r));
}

}  // namespace distillgan
