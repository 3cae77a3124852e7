#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "distillgan/tensor.hpp"

namespace distillgan {

enum class OptimizerKind { sgd, adam, rmsprop };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

// Conventional GAN/WGAN defaults; the source experiments never state their
// optimizer settings.
struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  float learning_rate = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float rms_decay = 0.99f;
  float eps = 1e-8f;
  // When set, every parameter is clamped to [-clip, clip] after each update.
  std::optional<float> clip;

  static OptimizerSettings adam(float lr = 2e-4f);
  static OptimizerSettings rmsprop(float lr = 5e-5f);
  static OptimizerSettings sgd(float lr);

  void validate() const;
};

// Owns per-parameter moment buffers for a fixed parameter list.
class Optimizer {
 public:
  Optimizer(OptimizerSettings settings, std::vector<TensorPtr<float>> params);

  // Applies one update from the accumulated gradients, clamps when a clip bound
  // is configured, then zeroes the gradients. Throws ContractError if any
  // parameter has no gradient buffer.
  void step();
  void zero_grad();

  const OptimizerSettings& settings() const { return settings_; }
  std::int64_t steps() const { return steps_; }
  const std::vector<TensorPtr<float>>& params() const { return params_; }

 private:
  OptimizerSettings settings_;
  std::vector<TensorPtr<float>> params_;
  std::vector<std::vector<float>> first_moment_;
  std::vector<std::vector<float>> second_moment_;
  std::int64_t steps_ = 0;
};

}  // namespace distillgan
