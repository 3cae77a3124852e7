#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "distillgan/ops.hpp"
#include "distillgan/tensor.hpp"

namespace distillgan {

enum class Role { generator, discriminator, classifier };

std::string to_string(Role role);
Role role_from_string(const std::string& name);

// Every up/down-sampling block uses a 4x4 kernel, stride 2, padding 1, which
// doubles or halves the spatial size exactly.
inline constexpr std::size_t kBlockKernel = 4;
inline constexpr ops::ConvGeometry kBlockGeometry{2, 1};
// Width of the classifier's penultimate (feature) layer.
inline constexpr std::size_t kFeatureWidth = 64;
inline constexpr float kLeakySlope = 0.2f;

// Declarative description of a DCGAN-style network. Channel widths scale
// linearly with depth_scale (d), so parameter counts grow roughly with d^2.
struct NetworkSpec {
  Role role = Role::generator;
  std::size_t image_size = 16;     // 8, 16, 32 or 64
  std::size_t image_channels = 1;  // 1 or 3
  std::size_t depth_scale = 2;
  std::size_t latent_dim = 100;    // generator input width
  std::size_t num_classes = 0;     // classifier only

  // Number of up/down-sampling blocks, log2(image_size) - 2.
  std::size_t blocks() const;
  // Channels at the 4x4 end of the trunk, d * 2^(blocks - 1).
  std::size_t base_channels() const;
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct DenseLayer {
  TensorPtr<float> weight;  // [out, in]
  TensorPtr<float> bias;    // [out] or null
};

struct ConvLayer {
  TensorPtr<float> weight;  // conv: [Co, C, K, K]; transposed: [C, Co, K, K]
  TensorPtr<float> bias;    // [Co] or null
  bool transposed = false;
};

struct NormLayer {
  TensorPtr<float> gamma;
  TensorPtr<float> beta;
  std::shared_ptr<ops::BatchNormStats<float>> stats;
};

enum class Activation { relu, leaky_relu, tanh, sigmoid, softmax };

struct ActivationLayer {
  Activation kind;
};

struct ReshapeLayer {
  Shape per_sample;  // target shape without the batch axis
};

struct SpatialMeanLayer {};

using Layer =
    std::variant<DenseLayer, ConvLayer, NormLayer, ActivationLayer, ReshapeLayer, SpatialMeanLayer>;

std::string layer_name(const Layer& layer);

// An ordered layer list with its parameter registry.
//
// generator:      dense(latent -> 4*4*C0), reshape, bn, relu, then per block
//                 conv_transpose (bn + relu, or tanh on the last block)
// discriminator:  per block conv + leaky_relu (bn on all but the first block),
//                 flatten, dense(-> 1), sigmoid unless in critic mode
// classifier:     discriminator trunk, spatial mean, dense(-> 64) + leaky_relu
//                 (the feature layer), dense(-> num_classes), softmax
class Network {
 public:
  // DCGAN initialization: conv/dense weights ~ N(0, 0.02), batchnorm scale
  // ~ N(1, 0.02), biases and shifts 0. Deterministic in `seed`.
  static Network build(const NetworkSpec& spec, bool critic_mode = false, std::uint64_t seed = 0);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  // Deep copy, including batchnorm running statistics.
  Network clone() const;

  const NetworkSpec& spec() const { return spec_; }
  Role role() const { return spec_.role; }
  bool critic_mode() const { return critic_mode_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<TensorPtr<float>> parameters() const;
  std::size_t param_count() const;

  // Full forward pass: generator images in [-1, 1], discriminator probability
  // (critic value in critic mode) [N, 1], classifier probabilities [N, C].
  TensorPtr<float> forward(Tape<float>* tape, const TensorPtr<float>& x, ops::NormMode mode);
  // Same pass without side effects; NormMode::train is rejected.
  TensorPtr<float> forward(Tape<float>* tape, const TensorPtr<float>& x, ops::NormMode mode) const;

  // Output before the final activation: discriminator logit / critic value, or
  // classifier logits. Generators have no separate logit output.
  TensorPtr<float> logits(Tape<float>* tape, const TensorPtr<float>& x, ops::NormMode mode);
  TensorPtr<float> logits(Tape<float>* tape, const TensorPtr<float>& x, ops::NormMode mode) const;

  // Classifier penultimate activations [N, 64].
  TensorPtr<float> features(const TensorPtr<float>& x) const;

  void zero_grad();
  void set_trainable(bool trainable);

  // Parameters in registry order, concatenated.
  std::vector<float> flat_weights() const;
  void set_flat_weights(std::span<const float> weights);
  // Batchnorm running means and variances, layer by layer.
  std::vector<float> flat_buffers() const;
  std::size_t buffer_count() const;
  void set_flat_buffers(std::span<const float> buffers);

 private:
  Network(NetworkSpec spec, bool critic_mode) : spec_(spec), critic_mode_(critic_mode) {}

  TensorPtr<float> run(Tape<float>* tape, TensorPtr<float> x, ops::NormMode mode,
                       std::size_t end) const;
  void check_input(const TensorPtr<float>& x) const;

  NetworkSpec spec_;
  bool critic_mode_ = false;
  std::vector<Layer> layers_;
  std::size_t logits_end_ = 0;    // layers [0, logits_end_) produce the logits
  std::size_t features_end_ = 0;  // classifier: layers [0, features_end_) produce features
};

// Total scalar parameters including batchnorm affine terms.
std::size_t param_count(const Network& net);

// Generator application in eval mode (running batchnorm statistics). z is
// [N, latent_dim]; the result is [N, channels, size, size].
TensorPtr<float> generate(const Network& net, const TensorPtr<float>& z);

}  // namespace distillgan
