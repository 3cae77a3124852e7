#include "distillgan/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace distillgan {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd, adam or rmsprop)");
}

OptimizerSettings OptimizerSettings::adam(float lr) {
  OptimizerSettings s;
  s.kind = OptimizerKind::adam;
  s.learning_rate = lr;
  return s;
}

OptimizerSettings OptimizerSettings::rmsprop(float lr) {
  OptimizerSettings s;
  s.kind = OptimizerKind::rmsprop;
  s.learning_rate = lr;
  return s;
}

OptimizerSettings OptimizerSettings::sgd(float lr) {
  OptimizerSettings s;
  s.kind = OptimizerKind::sgd;
  s.learning_rate = lr;
  return s;
}

void OptimizerSettings::validate() const {
  if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) {
    throw ConfigError("optimizer learning rate must be positive");
  }
  if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(rms_decay >= 0.0f && rms_decay < 1.0f)) throw ConfigError("rms decay must lie in [0, 1)");
  if (clip && !(*clip > 0.0f)) throw ConfigError("clip bound must be positive");
}

Optimizer::Optimizer(OptimizerSettings settings, std::vector<TensorPtr<float>> params)
    : settings_(settings), params_(std::move(params)) {
  settings_.validate();
  for (const auto& p : params_) {
    if (!p) throw ContractError("Optimizer: null parameter");
    const bool needs_first = settings_.kind == OptimizerKind::adam;
    const bool needs_second = settings_.kind != OptimizerKind::sgd;
    first_moment_.emplace_back(needs_first ? p->numel() : 0, 0.0f);
    second_moment_.emplace_back(needs_second ? p->numel() : 0, 0.0f);
  }
}

void Optimizer::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

void Optimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i]->has_grad()) {
      throw ContractError("Optimizer::step: parameter " + std::to_string(i) + " of shape " +
                          shape_str(params_[i]->shape) + " carries no gradient");
    }
  }
  ++steps_;
  const float lr = settings_.learning_rate;
  const float eps = settings_.eps;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<float>& p = *params_[i];
    switch (settings_.kind) {
      case OptimizerKind::sgd:
        for (std::size_t j = 0; j < p.numel(); ++j) p.data[j] -= lr * p.grad[j];
        break;
      case OptimizerKind::adam: {
        const float b1 = settings_.beta1, b2 = settings_.beta2;
        const double t = static_cast<double>(steps_);
        const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(b1), t));
        const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(b2), t));
        auto& m = first_moment_[i];
        auto& v = second_moment_[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
          const float g = p.grad[j];
          m[j] = b1 * m[j] + (1.0f - b1) * g;
          v[j] = b2 * v[j] + (1.0f - b2) * g * g;
          const float mhat = m[j] / bc1;
          const float vhat = v[j] / bc2;
          p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        break;
      }
      case OptimizerKind::rmsprop: {
        const float rho = settings_.rms_decay;
        auto& v = second_moment_[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
          const float g = p.grad[j];
          v[j] = rho * v[j] + (1.0f - rho) * g * g;
          p.data[j] -= lr * g / (std::sqrt(v[j]) + eps);
        }
        break;
      }
    }
    if (settings_.clip) {
      const float c = *settings_.clip;
      for (float& x : p.data) x = std::clamp(x, -c, c);
    }
    p.zero_grad();
  }
}

}  // namespace distillgan
