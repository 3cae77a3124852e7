#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <zlib.h>

#include "distillgan/checkpoint.hpp"
#include "distillgan/dataset.hpp"
#include "distillgan/error.hpp"
#include "distillgan/image_io.hpp"
#include "distillgan/random.hpp"

using namespace distillgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "distillgan_test_data";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> idx_header(std::uint32_t magic, std::initializer_list<std::uint32_t> dims) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
  };
  put(magic);
  for (auto d : dims) put(d);
  return out;
}

std::string parse_error_message(std::span<const std::uint8_t> bytes) {
  try {
    parse_idx_images(bytes, "img");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("byte/pixel affine map") {
  CHECK(byte_to_pixel(0) == -1.0f);
  CHECK(byte_to_pixel(255) == 1.0f);
  for (int b = 0; b < 256; ++b) CHECK(pixel_to_byte(byte_to_pixel(std::uint8_t(b))) == b);
}

TEST_CASE("IDX parse of a hand-built file") {
  auto bytes = idx_header(0x803, {2, 2, 3});
  for (std::uint8_t b : {0, 255, 51, 102, 153, 204, 1, 2, 3, 4, 5, 6}) bytes.push_back(b);
  const Dataset d = parse_idx_images(bytes, "img");
  CHECK(d.size() == 2);
  CHECK(d.height == 2);
  CHECK(d.width == 3);
  CHECK(d.pixels[0] == -1.0f);
  CHECK(d.pixels[1] == 1.0f);
  CHECK(d.pixels[2] == doctest::Approx(51 / 127.5 - 1));

  auto labels = idx_header(0x801, {3});
  labels.insert(labels.end(), {7, 0, 9});
  CHECK(parse_idx_labels(labels, "lab") == std::vector<int>{7, 0, 9});
}

TEST_CASE("IDX parse errors name byte offsets") {
  const auto full = idx_header(0x803, {1, 28, 28});
  const std::string truncated = parse_error_message(std::span(full).first(10));
  CHECK(truncated.find("offset 8") != std::string::npos);
  CHECK(truncated.find("truncated") != std::string::npos);

  auto bad = idx_header(0x802, {1, 2, 2});
  const std::string magic = parse_error_message(bad);
  CHECK(magic.find("magic") != std::string::npos);
  CHECK(magic.find("offset 0") != std::string::npos);

  // Header promises 4 pixels, body has 3.
  auto short_body = idx_header(0x803, {1, 2, 2});
  short_body.insert(short_body.end(), {1, 2, 3});
  CHECK(parse_error_message(short_body).find("offset 16") != std::string::npos);

  auto labels = idx_header(0x803, {3});
  CHECK_THROWS_AS(parse_idx_labels(labels, "lab"), ParseError);
}

TEST_CASE("IDX write/load round trip and count mismatch") {
  Dataset d = synth_shapes(30, 16, 3);
  // Quantize to bytes once so the round trip is exact.
  for (auto& p : d.pixels) p = byte_to_pixel(pixel_to_byte(p));
  const auto img = scratch("rt-images.idx"), lab = scratch("rt-labels.idx");
  write_idx(d, img, lab);
  const Dataset back = load_idx(img, lab);
  CHECK(back.pixels == d.pixels);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == 3);
  CHECK(back.height == 16);

  Dataset fewer = d.split(20).first;
  const auto lab2 = scratch("rt-labels-short.idx");
  write_idx(fewer, scratch("unused.idx"), lab2);
  CHECK_THROWS_AS(load_idx(img, lab2), ParseError);
  CHECK_THROWS_AS(load_idx(scratch("does-not-exist.idx")), IoError);
}

TEST_CASE("area downsampling 28 -> 16 preserves constants and range") {
  std::vector<float> flat(28 * 28, 0.25f);
  for (float v : area_resize(flat, 1, 28, 28, 16)) CHECK(v == doctest::Approx(0.25f));
  // Integer factor reduces to block means.
  std::vector<float> img(4 * 4);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i) / 16.0f;
  const auto half = area_resize(img, 1, 4, 4, 2);
  CHECK(half[0] == doctest::Approx((0 + 1 + 4 + 5) / 64.0));
  CHECK(half[3] == doctest::Approx((10 + 11 + 14 + 15) / 64.0));
  // Mass is preserved for non-integer factors.
  RandomStream rng(2);
  std::vector<float> noise(28 * 28);
  double sum = 0;
  for (auto& v : noise) sum += v = float(rng.uniform() * 2 - 1);
  double out_sum = 0;
  for (float v : area_resize(noise, 1, 28, 28, 16)) {
    out_sum += v;
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(out_sum / 256 == doctest::Approx(sum / 784).epsilon(1e-5));
}

TEST_CASE("MNIST train files, when available") {
  const char* dir = std::getenv("DISTILLGAN_MNIST_DIR");
  if (dir == nullptr) {
    MESSAGE("DISTILLGAN_MNIST_DIR not set; skipping");
    return;
  }
  const Dataset d = load_idx(fs::path(dir) / "train-images-idx3-ubyte",
                             fs::path(dir) / "train-labels-idx1-ubyte");
  CHECK(d.size() == 60000);
  CHECK(d.height == 28);
  CHECK(d.width == 28);
  CHECK(d.num_classes == 10);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("synth shapes are deterministic, balanced and in range") {
  const Dataset a = synth_shapes(3000, 16, 42);
  const Dataset b = synth_shapes(3000, 16, 42);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);
  CHECK(synth_shapes(30, 16, 43).pixels != synth_shapes(30, 16, 42).pixels);
  std::size_t hist[3] = {0, 0, 0};
  for (int l : a.labels) ++hist[l];
  CHECK(hist[0] == 1000);
  CHECK(hist[1] == 1000);
  CHECK(hist[2] == 1000);
  CHECK_NOTHROW(a.validate());
  CHECK_NOTHROW(synth_shapes(10, 8, 1).validate());
  CHECK_THROWS_AS(synth_shapes(10, 32, 1), ConfigError);
  // Every image has both foreground and background.
  for (std::size_t i = 0; i < 30; ++i) {
    const auto first = a.pixels.begin() + std::ptrdiff_t(i * 256);
    const auto [lo, hi] = std::minmax_element(first, first + 256);
    CHECK(*lo == -1.0f);
    CHECK(*hi == 1.0f);
  }
}

TEST_CASE("checkpoint round trip is bit-identical") {
  for (Role role : {Role::generator, Role::discriminator, Role::classifier}) {
    NetworkSpec s;
    s.role = role;
    s.image_size = 16;
    s.depth_scale = 3;
    s.num_classes = role == Role::classifier ? 10 : 0;
    auto net = Network::build(s, role == Role::discriminator, 77);
    if (role != Role::generator) {
      // Move the running statistics away from their initial values.
      const auto x = make_tensor<float>({8, 1, 16, 16}, LatentSampler(1, 256).sample(8)->data);
      net.forward(nullptr, x, ops::NormMode::train);
    }
    const auto path = scratch("net.dgck");
    save_checkpoint(net, path);
    const Network back = load_checkpoint(path);
    CHECK(back.spec() == net.spec());
    CHECK(back.critic_mode() == net.critic_mode());
    CHECK(back.flat_weights() == net.flat_weights());
    CHECK(back.flat_buffers() == net.flat_buffers());
    CHECK(serialize_checkpoint(back) == serialize_checkpoint(net));
  }
}

TEST_CASE("checkpoint corruption, version and length errors") {
  NetworkSpec s;
  s.depth_scale = 2;
  const auto net = Network::build(s, false, 1);
  const auto bytes = serialize_checkpoint(net);

  // Every single-byte flip is caught.
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x10;
    CHECK_THROWS_AS(deserialize_checkpoint(bad), ParseError);
  }
  auto flipped = bytes;
  flipped[100] ^= 1;
  try {
    deserialize_checkpoint(flipped);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }

  auto reseal = [](std::vector<std::uint8_t> b) {
    b.resize(b.size() - 4);
    const auto crc = std::uint32_t(crc32(0L, b.data(), uInt(b.size())));
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(crc >> (8 * i)));
    return b;
  };

  auto version = bytes;
  version[4] = 9;
  try {
    deserialize_checkpoint(reseal(version));
    FAIL("version accepted");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  // Weight vector one float shorter than param_count, with a valid checksum.
  const std::size_t count_at = 4 + 4 + 2 + 5 * 4;
  auto shorter = bytes;
  shorter.erase(shorter.begin() + std::ptrdiff_t(count_at + 8), shorter.begin() + std::ptrdiff_t(count_at + 12));
  shorter[count_at] -= 1;
  try {
    deserialize_checkpoint(reseal(shorter));
    FAIL("short weight vector accepted");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("length") != std::string::npos);
  }

  CHECK_THROWS_AS(deserialize_checkpoint(std::span(bytes).first(3)), ParseError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.dgck")), IoError);
}

TEST_CASE("grid tiling arithmetic and pixel map") {
  const auto one = full<float>({1, 1, 16, 16}, -1.0f);
  const Raster r1 = tile_grid(*one, 1);
  CHECK(r1.width == 16);
  CHECK(r1.height == 16);
  CHECK(r1.pixels[0] == 0);

  const auto four = full<float>({4, 1, 16, 16}, 1.0f);
  four->data[0] = -1.0f;
  const Raster r4 = tile_grid(*four, 2);
  CHECK(r4.width == 34);
  CHECK(r4.height == 34);
  CHECK(r4.pixels[0] == 0);
  CHECK(r4.pixels[1] == 255);

  // Three images in two columns leave a blank cell.
  const Raster r3 = tile_grid(*full<float>({3, 3, 8, 8}, -1.0f), 2);
  CHECK(r3.width == 18);
  CHECK(r3.height == 18);
  CHECK(r3.channels == 3);
  CHECK_THROWS_AS(tile_grid(*one, 0), ContractError);
}

TEST_CASE("PNG and PGM encodings decode back") {
  const auto imgs = make_tensor<float>({2, 1, 2, 2}, {-1, 1, 0, 1, 1, -1, -1, 0});
  const Raster r = tile_grid(*imgs, 2);
  const auto pgm = encode_pnm(r);
  const std::string head(pgm.begin(), pgm.begin() + 11);
  CHECK(head == "P5\n6 2\n255\n");
  CHECK(std::vector<std::uint8_t>(pgm.begin() + 11, pgm.end()) == r.pixels);

  const auto png = encode_png(r);
  REQUIRE(png.size() > 33);
  CHECK(png[1] == 'P');
  // IHDR width/height.
  CHECK(png[19] == 6);
  CHECK(png[23] == 2);
  // Find IDAT and inflate it.
  const std::string s(png.begin(), png.end());
  const auto at = s.find("IDAT");
  REQUIRE(at != std::string::npos);
  const std::uint32_t len = (png[at - 4] << 24) | (png[at - 3] << 16) | (png[at - 2] << 8) | png[at - 1];
  std::vector<std::uint8_t> raw(2 * 7);
  uLongf raw_len = raw.size();
  REQUIRE(uncompress(raw.data(), &raw_len, png.data() + at + 4, len) == Z_OK);
  CHECK(raw_len == 14);
  CHECK(raw[0] == 0);
  CHECK(std::vector<std::uint8_t>(raw.begin() + 1, raw.begin() + 7) ==
        std::vector<std::uint8_t>(r.pixels.begin(), r.pixels.begin() + 6));

  const auto path = scratch("grid.png");
  export_grid(*imgs, 2, path);
  CHECK(read_file(path) == png);
  export_grid(*imgs, 2, scratch("grid.pgm"));
  CHECK(read_file(scratch("grid.pgm")) == pgm);
}
