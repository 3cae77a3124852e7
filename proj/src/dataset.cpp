#include "distillgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "distillgan/error.hpp"
#include "distillgan/random.hpp"

namespace distillgan {

std::size_t Dataset::size() const {
  const std::size_t per = image_numel();
  return per == 0 ? 0 : pixels.size() / per;
}

void Dataset::validate() const {
  if (image_numel() == 0) throw ContractError("dataset '" + name + "' has empty images");
  if (pixels.size() % image_numel() != 0) {
    throw ContractError("dataset '" + name + "' pixel count is not a multiple of the image size");
  }
  for (float p : pixels) {
    if (!(p >= -1.0f && p <= 1.0f)) throw ContractError("dataset '" + name + "' pixel outside [-1, 1]");
  }
  if (!labels.empty()) {
    if (labels.size() != size()) throw ContractError("dataset '" + name + "' label count mismatch");
    for (int l : labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
        throw ContractError("dataset '" + name + "' label " + std::to_string(l) + " out of range");
      }
    }
  }
}

TensorPtr<float> Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t per = image_numel();
  std::vector<float> out(indices.size() * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("dataset index out of range");
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return make_tensor<float>({indices.size(), channels, height, width}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  if (labels.empty()) throw ContractError("dataset '" + name + "' has no labels");
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

TensorPtr<float> Dataset::slice(std::size_t first, std::size_t count) const {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
  return batch(idx);
}

std::pair<Dataset, Dataset> Dataset::split(std::size_t n) const {
  if (n > size()) throw ContractError("split point beyond dataset size");
  Dataset a = *this, b = *this;
  const auto cut = static_cast<std::ptrdiff_t>(n * image_numel());
  a.pixels.assign(pixels.begin(), pixels.begin() + cut);
  b.pixels.assign(pixels.begin() + cut, pixels.end());
  if (!labels.empty()) {
    a.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    b.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(n), labels.end());
  }
  return {std::move(a), std::move(b)};
}

std::uint8_t pixel_to_byte(float p) {
  const float v = std::round((std::clamp(p, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(v);
}

std::vector<float> area_resize(std::span<const float> image, std::size_t channels,
                               std::size_t height, std::size_t width, std::size_t out_size) {
  if (image.size() != channels * height * width) throw ShapeError("area_resize: size mismatch");
  if (out_size == 0) throw ContractError("area_resize: zero output size");
  // Per-axis overlap weights of output cell o with source cell s.
  auto weights = [](std::size_t in, std::size_t out) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      for (auto s = static_cast<std::size_t>(lo); s < in && static_cast<double>(s) < hi; ++s) {
        const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (overlap > 0) w[o].emplace_back(s, overlap / scale);
      }
    }
    return w;
  };
  const auto wy = weights(height, out_size);
  const auto wx = weights(width, out_size);
  std::vector<float> out(channels * out_size * out_size);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t oy = 0; oy < out_size; ++oy)
      for (std::size_t ox = 0; ox < out_size; ++ox) {
        double acc = 0.0;
        for (const auto& [sy, fy] : wy[oy])
          for (const auto& [sx, fx] : wx[ox]) acc += fy * fx * image[(c * height + sy) * width + sx];
        out[(c * out_size + oy) * out_size + ox] = std::clamp(static_cast<float>(acc), -1.0f, 1.0f);
      }
  return out;
}

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::uint32_t u32_be(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& msg, std::size_t offset) const {
    std::ostringstream os;
    os << name_ << ": " << msg << " at byte offset " << offset;
    throw ParseError(os.str());
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      std::ostringstream os;
      os << "truncated file: " << what << " needs " << n << " bytes, " << bytes_.size() - pos_
         << " available";
      fail(os.str(), pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kIdxImages3 = 0x00000803;
constexpr std::uint32_t kIdxImages4 = 0x00000804;
constexpr std::uint32_t kIdxLabels = 0x00000801;

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

}  // namespace

Dataset parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name) {
  ByteReader r(bytes, name);
  const std::uint32_t magic = r.u32_be("magic");
  if (magic != kIdxImages3 && magic != kIdxImages4) {
    std::ostringstream os;
    os << "bad image magic 0x" << std::hex << magic << " (expected 0x803)";
    r.fail(os.str(), 0);
  }
  Dataset d;
  d.name = name;
  const std::uint32_t n = r.u32_be("image count");
  if (magic == kIdxImages4) d.channels = r.u32_be("channel count");
  d.height = r.u32_be("row count");
  d.width = r.u32_be("column count");
  if (d.channels == 0 || d.height == 0 || d.width == 0) r.fail("zero image dimension", r.pos());
  const std::size_t total = static_cast<std::size_t>(n) * d.image_numel();
  const auto body = r.take(total, "pixel data");
  d.pixels.resize(total);
  std::transform(body.begin(), body.end(), d.pixels.begin(), byte_to_pixel);
  return d;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& name) {
  ByteReader r(bytes, name);
  const std::uint32_t magic = r.u32_be("magic");
  if (magic != kIdxLabels) {
    std::ostringstream os;
    os << "bad label magic 0x" << std::hex << magic << " (expected 0x801)";
    r.fail(os.str(), 0);
  }
  const std::uint32_t n = r.u32_be("label count");
  const auto body = r.take(n, "label data");
  return {body.begin(), body.end()};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t target_size) {
  Dataset d = parse_idx_images(read_file(images), images.filename().string());
  if (!labels.empty()) {
    d.labels = parse_idx_labels(read_file(labels), labels.filename().string());
    if (d.labels.size() != d.size()) {
      throw ParseError(labels.filename().string() + ": label count " +
                       std::to_string(d.labels.size()) + " does not match image count " +
                       std::to_string(d.size()) + " (count field at byte offset 4)");
    }
    d.num_classes = static_cast<std::size_t>(*std::max_element(d.labels.begin(), d.labels.end())) + 1;
  }
  if (target_size != 0 && (target_size != d.height || target_size != d.width)) {
    const std::size_t n = d.size();
    std::vector<float> out;
    out.reserve(n * d.channels * target_size * target_size);
    const std::size_t per = d.image_numel();
    for (std::size_t i = 0; i < n; ++i) {
      const auto img = area_resize(std::span(d.pixels).subspan(i * per, per), d.channels,
                                   d.height, d.width, target_size);
      out.insert(out.end(), img.begin(), img.end());
    }
    d.pixels = std::move(out);
    d.height = d.width = target_size;
  }
  return d;
}

Dataset load_idx(const std::filesystem::path& images, std::size_t target_size) {
  return load_idx(images, {}, target_size);
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(20 + data.pixels.size());
  put_u32_be(out, data.channels == 1 ? kIdxImages3 : kIdxImages4);
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  if (data.channels != 1) put_u32_be(out, static_cast<std::uint32_t>(data.channels));
  put_u32_be(out, static_cast<std::uint32_t>(data.height));
  put_u32_be(out, static_cast<std::uint32_t>(data.width));
  for (float p : data.pixels) out.push_back(pixel_to_byte(p));
  write_file(images, out);
  if (!labels.empty()) {
    std::vector<std::uint8_t> lab;
    put_u32_be(lab, kIdxLabels);
    put_u32_be(lab, static_cast<std::uint32_t>(data.labels.size()));
    for (int l : data.labels) lab.push_back(static_cast<std::uint8_t>(l));
    write_file(labels, lab);
  }
}

Dataset synth_shapes(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (size != 8 && size != 16) throw ConfigError("synth_shapes size must be 8 or 16");
  constexpr int kSuper = 4;
  Dataset d;
  d.name = "synth_shapes";
  d.height = d.width = size;
  d.num_classes = 3;
  d.pixels.resize(n * size * size);
  d.labels.resize(n);
  RandomStream rng(seed, 0x5348415045ull);
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 3);
    d.labels[i] = label;
    // Half-extent in pixels, then a centre that keeps the shape inside the frame.
    const double r = s * (0.22 + 0.16 * rng.uniform());
    const double cx = r + (s - 2 * r) * rng.uniform();
    const double cy = r + (s - 2 * r) * rng.uniform();
    const double arm = std::max(0.9, 0.3 * r);
    float* img = d.pixels.data() + i * size * size;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double dx = x + (sx + 0.5) / kSuper - cx;
            const double dy = y + (sy + 0.5) / kSuper - cy;
            bool inside = false;
            switch (label) {
              case 0: inside = dx * dx + dy * dy <= r * r; break;
              case 1: inside = std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r; break;
              default:
                inside = (std::abs(dx) <= arm && std::abs(dy) <= r) ||
                         (std::abs(dy) <= arm && std::abs(dx) <= r);
            }
            hits += inside;
          }
        img[y * size + x] = 2.0f * static_cast<float>(hits) / (kSuper * kSuper) - 1.0f;
      }
  }
  return d;
}

}  // namespace distillgan
