#include "distillgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include <zlib.h>

#include "distillgan/dataset.hpp"
#include "distillgan/error.hpp"

namespace distillgan {
namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', 'K'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void floats(const std::vector<float>& v) {
    le<std::uint64_t>(v.size());
    for (float f : v) le(std::bit_cast<std::uint32_t>(f));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[pos + i]) << (8 * i);
    pos += sizeof(U);
    return v;
  }

  std::vector<float> floats(std::size_t expected, const char* what) {
    const std::size_t at = pos;
    const auto n = le<std::uint64_t>(what);
    if (n != expected) {
      std::ostringstream os;
      os << "checkpoint: " << what << " length " << n << " does not match the spec's " << expected
         << " (length field at byte offset " << at << ")";
      throw ParseError(os.str());
    }
    need(n * 4, what);
    std::vector<float> v(n);
    for (auto& f : v) f = std::bit_cast<float>(le<std::uint32_t>(what));
    return v;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes.size() - pos < n) {
      std::ostringstream os;
      os << "checkpoint: truncated " << what << " at byte offset " << pos;
      throw ParseError(os.str());
    }
  }

  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Network& net) {
  const NetworkSpec& s = net.spec();
  Writer w;
  w.raw(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint8_t>(static_cast<std::uint8_t>(s.role));
  w.le<std::uint8_t>(net.critic_mode() ? 1 : 0);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(s.image_size));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(s.image_channels));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(s.depth_scale));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(s.latent_dim));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(s.num_classes));
  w.floats(net.flat_weights());
  w.floats(net.flat_buffers());
  w.le<std::uint32_t>(crc32_of(w.out));
  return std::move(w.out);
}

Network deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("checkpoint: bad magic at byte offset 0 (expected \"DGCK\")");
  }
  if (bytes.size() < 12) throw ParseError("checkpoint: truncated header at byte offset 4");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.subspan(body));
  const auto stored = tail.le<std::uint32_t>("checksum");
  const auto actual = crc32_of(bytes.first(body));
  if (stored != actual) {
    std::ostringstream os;
    os << "checkpoint: checksum mismatch (stored 0x" << std::hex << stored << ", computed 0x"
       << actual << std::dec << ", checksum at byte offset " << body << ")";
    throw ParseError(os.str());
  }

  Reader r(bytes.first(body));
  r.pos = 4;
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version) +
                     " at byte offset 4 (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  NetworkSpec spec;
  const auto role = r.le<std::uint8_t>("role");
  if (role > static_cast<std::uint8_t>(Role::classifier)) {
    throw ParseError("checkpoint: bad role byte at offset 8");
  }
  spec.role = static_cast<Role>(role);
  const bool critic = r.le<std::uint8_t>("critic flag") != 0;
  spec.image_size = r.le<std::uint32_t>("image size");
  spec.image_channels = r.le<std::uint32_t>("channels");
  spec.depth_scale = r.le<std::uint32_t>("depth scale");
  spec.latent_dim = r.le<std::uint32_t>("latent dim");
  spec.num_classes = r.le<std::uint32_t>("classes");

  Network net = [&] {
    try {
      return Network::build(spec, critic);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("checkpoint: invalid spec record at byte offset 8: ") + e.what());
    }
  }();
  net.set_flat_weights(r.floats(net.param_count(), "weight vector"));
  net.set_flat_buffers(r.floats(net.buffer_count(), "buffer vector"));
  if (r.pos != body) {
    throw ParseError("checkpoint: " + std::to_string(body - r.pos) +
                     " unexpected trailing bytes at byte offset " + std::to_string(r.pos));
  }
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace distillgan
