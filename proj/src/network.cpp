#include "distillgan/network.hpp"

#include <bit>
#include <cmath>

#include "distillgan/error.hpp"
#include "distillgan/random.hpp"

namespace distillgan {

std::string to_string(Role role) {
  switch (role) {
    case Role::generator: return "generator";
    case Role::discriminator: return "discriminator";
    case Role::classifier: return "classifier";
  }
  return "?";
}

Role role_from_string(const std::string& name) {
  if (name == "generator") return Role::generator;
  if (name == "discriminator") return Role::discriminator;
  if (name == "classifier") return Role::classifier;
  throw ConfigError("unknown network role '" + name + "'");
}

std::size_t NetworkSpec::blocks() const {
  return static_cast<std::size_t>(std::countr_zero(image_size)) - 2;
}

std::size_t NetworkSpec::base_channels() const { return depth_scale << (blocks() - 1); }

void NetworkSpec::validate() const {
  if (image_size != 8 && image_size != 16 && image_size != 32 && image_size != 64) {
    throw ConfigError("image_size must be 8, 16, 32 or 64, got " + std::to_string(image_size));
  }
  if (image_channels != 1 && image_channels != 3) {
    throw ConfigError("image_channels must be 1 or 3, got " + std::to_string(image_channels));
  }
  if (depth_scale < 1 || depth_scale > 4096) {
    throw ConfigError("depth_scale must be in [1, 4096], got " + std::to_string(depth_scale));
  }
  if (role == Role::generator && latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (role == Role::classifier && num_classes < 2) {
    throw ConfigError("classifier needs num_classes >= 2, got " + std::to_string(num_classes));
  }
}

std::string layer_name(const Layer& layer) {
  struct Visitor {
    std::string operator()(const DenseLayer&) const { return "dense"; }
    std::string operator()(const ConvLayer& c) const {
      return c.transposed ? "conv_transpose" : "conv";
    }
    std::string operator()(const NormLayer&) const { return "batchnorm"; }
    std::string operator()(const ActivationLayer& a) const {
      switch (a.kind) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
      }
      return "?";
    }
    std::string operator()(const ReshapeLayer&) const { return "reshape"; }
    std::string operator()(const SpatialMeanLayer&) const { return "spatial_mean"; }
  };
  return std::visit(Visitor{}, layer);
}

namespace {

constexpr float kInitStd = 0.02f;

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed, 0x494e4954ull) {}

  TensorPtr<float> normal(Shape shape, float mean) {
    auto t = zeros<float>(std::move(shape));
    for (float& v : t->data) v = mean + kInitStd * static_cast<float>(rng_.normal());
    t->requires_grad = true;
    return t;
  }

  static TensorPtr<float> zero(Shape shape) {
    auto t = zeros<float>(std::move(shape));
    t->requires_grad = true;
    return t;
  }

  DenseLayer dense(std::size_t in, std::size_t out, bool bias) {
    return {normal({out, in}, 0.0f), bias ? zero({out}) : nullptr};
  }
  ConvLayer conv(std::size_t in, std::size_t out, bool bias) {
    return {normal({out, in, kBlockKernel, kBlockKernel}, 0.0f), bias ? zero({out}) : nullptr,
            false};
  }
  ConvLayer conv_transpose(std::size_t in, std::size_t out, bool bias) {
    return {normal({in, out, kBlockKernel, kBlockKernel}, 0.0f), bias ? zero({out}) : nullptr,
            true};
  }
  NormLayer norm(std::size_t channels) {
    return {normal({channels}, 1.0f), zero({channels}),
            std::make_shared<ops::BatchNormStats<float>>(channels)};
  }

 private:
  RandomStream rng_;
};

// Conv trunk shared by the discriminator and the classifier: image -> [N, C0, 4, 4].
void add_trunk(std::vector<Layer>& layers, Builder& b, const NetworkSpec& spec) {
  std::size_t in = spec.image_channels;
  std::size_t out = spec.depth_scale;
  for (std::size_t i = 0; i < spec.blocks(); ++i) {
    const bool first = i == 0;
    layers.emplace_back(b.conv(in, out, first));
    if (!first) layers.emplace_back(b.norm(out));
    layers.emplace_back(ActivationLayer{Activation::leaky_relu});
    in = out;
    out *= 2;
  }
}

TensorPtr<float> deep_copy(const TensorPtr<float>& t) {
  if (!t) return nullptr;
  auto c = std::make_shared<Tensor<float>>(*t);
  c->drop_grad();
  return c;
}

template <typename Fn>
void for_each_param(const std::vector<Layer>& layers, Fn&& fn) {
  for (const Layer& layer : layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      fn(d->weight);
      if (d->bias) fn(d->bias);
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      fn(c->weight);
      if (c->bias) fn(c->bias);
    } else if (const auto* n = std::get_if<NormLayer>(&layer)) {
      fn(n->gamma);
      fn(n->beta);
    }
  }
}

}  // namespace

Network Network::build(const NetworkSpec& spec, bool critic_mode, std::uint64_t seed) {
  spec.validate();
  if (critic_mode && spec.role != Role::discriminator) {
    throw ConfigError("critic mode applies to discriminators only");
  }
  Network net(spec, critic_mode);
  Builder b(seed);
  auto& layers = net.layers_;
  const std::size_t c0 = spec.base_channels();

  switch (spec.role) {
    case Role::generator: {
      layers.emplace_back(b.dense(spec.latent_dim, 16 * c0, false));
      layers.emplace_back(ReshapeLayer{{c0, 4, 4}});
      layers.emplace_back(b.norm(c0));
      layers.emplace_back(ActivationLayer{Activation::relu});
      std::size_t in = c0;
      for (std::size_t i = 0; i < spec.blocks(); ++i) {
        const bool last = i + 1 == spec.blocks();
        const std::size_t out = last ? spec.image_channels : in / 2;
        layers.emplace_back(b.conv_transpose(in, out, last));
        if (last) {
          layers.emplace_back(ActivationLayer{Activation::tanh});
        } else {
          layers.emplace_back(b.norm(out));
          layers.emplace_back(ActivationLayer{Activation::relu});
        }
        in = out;
      }
      net.logits_end_ = layers.size();
      break;
    }
    case Role::discriminator: {
      add_trunk(layers, b, spec);
      layers.emplace_back(ReshapeLayer{{16 * c0}});
      layers.emplace_back(b.dense(16 * c0, 1, true));
      net.logits_end_ = layers.size();
      if (!critic_mode) layers.emplace_back(ActivationLayer{Activation::sigmoid});
      break;
    }
    case Role::classifier: {
      add_trunk(layers, b, spec);
      layers.emplace_back(SpatialMeanLayer{});
      layers.emplace_back(b.dense(c0, kFeatureWidth, true));
      layers.emplace_back(ActivationLayer{Activation::leaky_relu});
      net.features_end_ = layers.size();
      layers.emplace_back(b.dense(kFeatureWidth, spec.num_classes, true));
      net.logits_end_ = layers.size();
      layers.emplace_back(ActivationLayer{Activation::softmax});
      break;
    }
  }
  return net;
}

Network Network::clone() const {
  Network copy(spec_, critic_mode_);
  copy.logits_end_ = logits_end_;
  copy.features_end_ = features_end_;
  copy.layers_.reserve(layers_.size());
  for (const Layer& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      copy.layers_.emplace_back(DenseLayer{deep_copy(d->weight), deep_copy(d->bias)});
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      copy.layers_.emplace_back(ConvLayer{deep_copy(c->weight), deep_copy(c->bias), c->transposed});
    } else if (const auto* n = std::get_if<NormLayer>(&layer)) {
      copy.layers_.emplace_back(NormLayer{deep_copy(n->gamma), deep_copy(n->beta),
                                          std::make_shared<ops::BatchNormStats<float>>(*n->stats)});
    } else {
      copy.layers_.push_back(layer);
    }
  }
  return copy;
}

std::vector<TensorPtr<float>> Network::parameters() const {
  std::vector<TensorPtr<float>> out;
  for_each_param(layers_, [&](const TensorPtr<float>& t) { out.push_back(t); });
  return out;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for_each_param(layers_, [&](const TensorPtr<float>& t) { n += t->numel(); });
  return n;
}

std::size_t param_count(const Network& net) { return net.param_count(); }

void Network::check_input(const TensorPtr<float>& x) const {
  if (!x) throw ContractError("network input is null");
  Shape expected;
  if (spec_.role == Role::generator) {
    expected = {spec_.latent_dim};
  } else {
    expected = {spec_.image_channels, spec_.image_size, spec_.image_size};
  }
  if (x->rank() != expected.size() + 1 || x->shape[0] == 0 ||
      !std::equal(expected.begin(), expected.end(), x->shape.begin() + 1)) {
    throw ShapeError(to_string(spec_.role) + " expects input [N" +
                     [&] {
                       std::string s;
                       for (auto e : expected) s += "x" + std::to_string(e);
                       return s;
                     }() +
                     "], got " + shape_str(x->shape));
  }
}

TensorPtr<float> Network::run(Tape<float>* tape, TensorPtr<float> x, ops::NormMode mode,
                              std::size_t end) const {
  check_input(x);
  const std::size_t batch = x->shape[0];
  for (std::size_t i = 0; i < end; ++i) {
    const Layer& layer = layers_[i];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      x = ops::dense(tape, x, d->weight, d->bias);
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      x = c->transposed ? ops::conv_transpose2d(tape, x, c->weight, c->bias, kBlockGeometry)
                        : ops::conv2d(tape, x, c->weight, c->bias, kBlockGeometry);
    } else if (const auto* n = std::get_if<NormLayer>(&layer)) {
      x = ops::batchnorm2d(tape, x, n->gamma, n->beta, *n->stats, mode);
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      switch (a->kind) {
        case Activation::relu: x = ops::relu(tape, x); break;
        case Activation::leaky_relu: x = ops::leaky_relu(tape, x, kLeakySlope); break;
        case Activation::tanh: x = ops::tanh(tape, x); break;
        case Activation::sigmoid: x = ops::sigmoid(tape, x); break;
        case Activation::softmax: x = ops::softmax(tape, x); break;
      }
    } else if (const auto* r = std::get_if<ReshapeLayer>(&layer)) {
      Shape shape{batch};
      shape.insert(shape.end(), r->per_sample.begin(), r->per_sample.end());
      x = ops::reshape(tape, x, std::move(shape));
    } else {
      x = ops::spatial_mean(tape, x);
    }
  }
  return x;
}

TensorPtr<float> Network::forward(Tape<float>* tape, const TensorPtr<float>& x,
                                  ops::NormMode mode) {
  return run(tape, x, mode, layers_.size());
}

TensorPtr<float> Network::forward(Tape<float>* tape, const TensorPtr<float>& x,
                                  ops::NormMode mode) const {
  if (mode == ops::NormMode::train) {
    throw ContractError("train-mode forward needs a mutable network");
  }
  return run(tape, x, mode, layers_.size());
}

TensorPtr<float> Network::logits(Tape<float>* tape, const TensorPtr<float>& x, ops::NormMode mode) {
  if (spec_.role == Role::generator) throw ContractError("generators have no logit output");
  return run(tape, x, mode, logits_end_);
}

TensorPtr<float> Network::logits(Tape<float>* tape, const TensorPtr<float>& x,
                                 ops::NormMode mode) const {
  if (spec_.role == Role::generator) throw ContractError("generators have no logit output");
  if (mode == ops::NormMode::train) {
    throw ContractError("train-mode forward needs a mutable network");
  }
  return run(tape, x, mode, logits_end_);
}

TensorPtr<float> Network::features(const TensorPtr<float>& x) const {
  if (spec_.role != Role::classifier) throw ContractError("features() needs a classifier");
  return run(nullptr, x, ops::NormMode::eval, features_end_);
}

void Network::zero_grad() {
  for_each_param(layers_, [](const TensorPtr<float>& t) { t->zero_grad(); });
}

void Network::set_trainable(bool trainable) {
  for_each_param(layers_, [&](const TensorPtr<float>& t) {
    t->requires_grad = trainable;
    if (!trainable) t->drop_grad();
  });
}

std::vector<float> Network::flat_weights() const {
  std::vector<float> out;
  out.reserve(param_count());
  for_each_param(layers_, [&](const TensorPtr<float>& t) {
    out.insert(out.end(), t->data.begin(), t->data.end());
  });
  return out;
}

void Network::set_flat_weights(std::span<const float> weights) {
  if (weights.size() != param_count()) {
    throw ShapeError("expected " + std::to_string(param_count()) + " weights, got " +
                     std::to_string(weights.size()));
  }
  std::size_t pos = 0;
  for_each_param(layers_, [&](const TensorPtr<float>& t) {
    std::copy_n(weights.begin() + static_cast<std::ptrdiff_t>(pos), t->numel(), t->data.begin());
    pos += t->numel();
  });
}

std::size_t Network::buffer_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) {
    if (const auto* norm = std::get_if<NormLayer>(&layer)) n += 2 * norm->stats->running_mean.size();
  }
  return n;
}

std::vector<float> Network::flat_buffers() const {
  std::vector<float> out;
  out.reserve(buffer_count());
  for (const Layer& layer : layers_) {
    if (const auto* n = std::get_if<NormLayer>(&layer)) {
      out.insert(out.end(), n->stats->running_mean.begin(), n->stats->running_mean.end());
      out.insert(out.end(), n->stats->running_var.begin(), n->stats->running_var.end());
    }
  }
  return out;
}

void Network::set_flat_buffers(std::span<const float> buffers) {
  if (buffers.size() != buffer_count()) {
    throw ShapeError("expected " + std::to_string(buffer_count()) + " buffer values, got " +
                     std::to_string(buffers.size()));
  }
  auto it = buffers.begin();
  for (const Layer& layer : layers_) {
    if (const auto* n = std::get_if<NormLayer>(&layer)) {
      const auto c = static_cast<std::ptrdiff_t>(n->stats->running_mean.size());
      std::copy(it, it + c, n->stats->running_mean.begin());
      it += c;
      std::copy(it, it + c, n->stats->running_var.begin());
      it += c;
    }
  }
}

TensorPtr<float> generate(const Network& net, const TensorPtr<float>& z) {
  if (net.role() != Role::generator) throw ContractError("generate() needs a generator");
  return net.forward(nullptr, z, ops::NormMode::eval);
}

}  // namespace distillgan
