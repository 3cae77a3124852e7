#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "distillgan/tensor.hpp"

namespace distillgan {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The output
// block is a pure function of (counter, key), so streams are reproducible on
// every platform and cheap to fork.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Sequential view over a Philox stream identified by (seed, stream id).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::uint64_t block_ = 0;
  std::uint64_t stream_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  std::size_t used_ = 4;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// i.i.d. N(0, I) latent vectors; the same seed gives the same sequence.
class LatentSampler {
 public:
  LatentSampler(std::uint64_t seed, std::size_t latent_dim);

  std::size_t latent_dim() const { return latent_dim_; }
  // [batch, latent_dim]
  TensorPtr<float> sample(std::size_t batch);

 private:
  RandomStream stream_;
  std::size_t latent_dim_;
};

}  // namespace distillgan
