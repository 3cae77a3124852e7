#include "distillgan/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "distillgan/error.hpp"
#include "distillgan/ops.hpp"

namespace distillgan {

using ops::NormMode;

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::gan: return "gan";
    case LossKind::wgan: return "wgan";
    case LossKind::distill_mse: return "distill_mse";
    case LossKind::distill_joint: return "distill_joint";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "gan") return LossKind::gan;
  if (name == "wgan") return LossKind::wgan;
  if (name == "distill_mse" || name == "mse") return LossKind::distill_mse;
  if (name == "distill_joint" || name == "joint") return LossKind::distill_joint;
  throw ConfigError("unknown loss kind '" + name + "' (gan, wgan, mse, joint)");
}

TrainConfig TrainConfig::wgan_defaults() {
  TrainConfig c;
  c.loss_kind = LossKind::wgan;
  c.gen_optimizer = OptimizerSettings::rmsprop();
  c.disc_optimizer = OptimizerSettings::rmsprop();
  return c;
}

void TrainConfig::validate() const {
  if (loss_kind == LossKind::distill_joint && !alpha) {
    throw ConfigError("loss distill_joint requires alpha");
  }
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(*alpha));
  }
  if (critic_steps < 1) throw ConfigError("critic steps k must be >= 1");
  if (!(clip > 0.0)) throw ConfigError("clip bound must be positive");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 (batchnorm needs a batch)");
  if (steps < 1) throw ConfigError("step budget must be >= 1");
  if (log_interval < 1) throw ConfigError("log interval must be >= 1");
  gen_optimizer.validate();
  disc_optimizer.validate();
}

double StepLosses::get(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  throw ContractError("no loss column '" + name + "'");
}

namespace {

double scalar(const TensorPtr<float>& t) { return t->data.at(0); }

void check_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + what + " at step " + std::to_string(step));
  }
}

double mean_sigmoid(const Tensor<float>& logits) {
  double acc = 0.0;
  for (float l : logits.data) acc += 1.0 / (1.0 + std::exp(-static_cast<double>(l)));
  return acc / static_cast<double>(logits.numel());
}

// Freezes a network's parameters for the lifetime of the guard so that
// backward passes through it leave no parameter gradients.
class FrozenScope {
 public:
  explicit FrozenScope(Network& net) : net_(net) { net_.set_trainable(false); }
  ~FrozenScope() { net_.set_trainable(true); }
  FrozenScope(const FrozenScope&) = delete;
  FrozenScope& operator=(const FrozenScope&) = delete;

 private:
  Network& net_;
};

struct DiscResult {
  double loss, d_real, d_fake;
};

DiscResult update_discriminator(Network& disc, const TensorPtr<float>& real,
                                const Tensor<float>& fake, Optimizer& opt, std::size_t step) {
  Tape<float> tape;
  const auto lr = disc.logits(&tape, real, NormMode::train);
  const auto lf = disc.logits(&tape, detach(fake), NormMode::train);
  const auto loss = discriminator_loss(&tape, lr, lf);
  check_finite(scalar(loss), "discriminator loss", step);
  tape.backward(loss);
  opt.step();
  return {scalar(loss), mean_sigmoid(*lr), mean_sigmoid(*lf)};
}

void check_pair(const Network& teacher, const Network& student) {
  const auto& t = teacher.spec();
  const auto& s = student.spec();
  if (t.role != Role::generator || s.role != Role::generator) {
    throw ContractError("distillation needs generator teacher and student");
  }
  if (t.image_size != s.image_size || t.image_channels != s.image_channels) {
    throw ContractError("teacher images are " + std::to_string(t.image_channels) + "x" +
                        std::to_string(t.image_size) + "^2 but student images are " +
                        std::to_string(s.image_channels) + "x" + std::to_string(s.image_size) + "^2");
  }
  if (t.latent_dim != s.latent_dim) throw ContractError("teacher and student latent sizes differ");
}

// alpha * adversarial + (1 - alpha) * mse on an already computed student output.
// Terms with zero weight still enter the graph so that gradients are
// combined the same way for every alpha. The caller keeps `disc` frozen until
// the backward pass is done.
struct StudentObjective {
  TensorPtr<float> total, adv, mse;
};

StudentObjective student_objective(Tape<float>* tape, const TensorPtr<float>& fake,
                                   const TensorPtr<float>& target, Network* disc, double alpha,
                                   GeneratorLoss form, NormMode disc_mode) {
  StudentObjective o;
  if (target) o.mse = ops::mse_loss(tape, fake, target);
  if (disc) o.adv = generator_adversarial_loss(tape, disc->logits(tape, fake, disc_mode), form);
  if (o.adv && o.mse) {
    o.total = ops::add(tape, ops::scale(tape, o.adv, static_cast<float>(alpha)),
                       ops::scale(tape, o.mse, static_cast<float>(1.0 - alpha)));
  } else {
    o.total = o.adv ? o.adv : o.mse;
  }
  return o;
}

ParamGrads collect_grads(Network& student, Network* frozen,
                         const std::function<TensorPtr<float>(Tape<float>*)>& build) {
  std::optional<FrozenScope> scope;
  if (frozen) scope.emplace(*frozen);
  student.zero_grad();
  Tape<float> tape;
  tape.backward(build(&tape));
  ParamGrads out;
  for (const auto& p : student.parameters()) {
    out.push_back(p->has_grad() ? p->grad : std::vector<float>(p->numel(), 0.0f));
  }
  student.zero_grad();
  return out;
}

}  // namespace

TensorPtr<float> discriminator_loss(Tape<float>* tape, const TensorPtr<float>& real_logits,
                                    const TensorPtr<float>& fake_logits) {
  return ops::add(tape, ops::bce_with_logits(tape, real_logits, 1.0f),
                  ops::bce_with_logits(tape, fake_logits, 0.0f));
}

TensorPtr<float> generator_adversarial_loss(Tape<float>* tape, const TensorPtr<float>& fake_logits,
                                            GeneratorLoss form) {
  if (form == GeneratorLoss::non_saturating) return ops::bce_with_logits(tape, fake_logits, 1.0f);
  // log(1 - D) = -bce(logit, 0)
  return ops::scale(tape, ops::bce_with_logits(tape, fake_logits, 0.0f), -1.0f);
}

double discriminator_objective(std::span<const float> d_real, std::span<const float> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw ContractError("discriminator_objective: empty batch");
  double r = 0.0, f = 0.0;
  for (float p : d_real) r += std::log(static_cast<double>(p));
  for (float p : d_fake) f += std::log(1.0 - static_cast<double>(p));
  return r / static_cast<double>(d_real.size()) + f / static_cast<double>(d_fake.size());
}

StepLosses gan_step(Network& gen, Network& disc, const TensorPtr<float>& real,
                    const TensorPtr<float>& z, Optimizer& gen_opt, Optimizer& disc_opt,
                    GeneratorLoss form, std::size_t step) {
  if (gen.role() != Role::generator) throw ContractError("gan_step: first network must be a generator");
  if (disc.role() != Role::discriminator || disc.critic_mode()) {
    throw ContractError("gan_step needs a discriminator with a sigmoid head");
  }
  Tape<float> gtape;
  const auto fake = gen.forward(&gtape, z, NormMode::train);
  const DiscResult d = update_discriminator(disc, real, *fake, disc_opt, step);

  FrozenScope frozen(disc);
  const auto g_loss =
      generator_adversarial_loss(&gtape, disc.logits(&gtape, fake, NormMode::train), form);
  check_finite(scalar(g_loss), "generator loss", step);
  gtape.backward(g_loss);
  gen_opt.step();
  return {{{"d_loss", d.loss}, {"g_loss", scalar(g_loss)}, {"d_real", d.d_real}, {"d_fake", d.d_fake}}};
}

double critic_objective(const Network& critic, const TensorPtr<float>& real,
                        const TensorPtr<float>& fake) {
  const auto fr = critic.logits(nullptr, real, NormMode::batch);
  const auto ff = critic.logits(nullptr, fake, NormMode::batch);
  return scalar(ops::mean<float>(nullptr, fr)) - scalar(ops::mean<float>(nullptr, ff));
}

StepLosses wgan_step(Network& gen, Network& critic, std::span<const TensorPtr<float>> real_batches,
                     std::span<const TensorPtr<float>> critic_z, const TensorPtr<float>& gen_z,
                     Optimizer& gen_opt, Optimizer& critic_opt, std::size_t step,
                     const CriticHook& on_critic_update) {
  if (!critic.critic_mode()) throw ContractError("wgan_step needs a critic (linear head)");
  if (!critic_opt.settings().clip) throw ContractError("wgan_step needs a critic clip bound");
  if (real_batches.empty() || real_batches.size() != critic_z.size()) {
    throw ContractError("wgan_step needs k >= 1 real batches and k latent batches");
  }
  double wasserstein = 0.0, critic_loss = 0.0;
  for (std::size_t i = 0; i < real_batches.size(); ++i) {
    const auto fake = detach(*gen.forward(nullptr, critic_z[i], NormMode::train));
    Tape<float> tape;
    const auto fr = ops::mean(&tape, critic.logits(&tape, real_batches[i], NormMode::train));
    const auto ff = ops::mean(&tape, critic.logits(&tape, fake, NormMode::train));
    // Minimizing E f(fake) - E f(real) maximizes the critic objective.
    const auto loss = ops::sub(&tape, ff, fr);
    check_finite(scalar(loss), "critic loss", step);
    tape.backward(loss);
    critic_opt.step();
    if (on_critic_update) on_critic_update(critic);
    critic_loss = scalar(loss);
    wasserstein = -critic_loss;
  }

  Tape<float> gtape;
  const auto fake = gen.forward(&gtape, gen_z, NormMode::train);
  FrozenScope frozen(critic);
  const auto g_loss =
      ops::scale(&gtape, ops::mean(&gtape, critic.logits(&gtape, fake, NormMode::train)), -1.0f);
  check_finite(scalar(g_loss), "generator loss", step);
  gtape.backward(g_loss);
  gen_opt.step();
  return {{{"wasserstein", wasserstein}, {"critic_loss", critic_loss}, {"g_loss", scalar(g_loss)}}};
}

TensorPtr<float> teacher_targets(const Network& teacher, const TensorPtr<float>& z) {
  return teacher.forward(nullptr, z, NormMode::batch);
}

StepLosses distill_mse_step(const Network& teacher, Network& student, const TensorPtr<float>& z,
                            Optimizer& opt, std::size_t step) {
  check_pair(teacher, student);
  const auto target = teacher_targets(teacher, z);
  Tape<float> tape;
  const auto fake = student.forward(&tape, z, NormMode::train);
  const auto o = student_objective(&tape, fake, target, nullptr, 0.0, GeneratorLoss::non_saturating,
                                   NormMode::train);
  check_finite(scalar(o.total), "distillation loss", step);
  tape.backward(o.total);
  opt.step();
  return {{{"mse", scalar(o.mse)}}};
}

StepLosses distill_joint_step(const Network& teacher, Network& student, Network& disc,
                              const TensorPtr<float>& real, const TensorPtr<float>& z, double alpha,
                              Optimizer& student_opt, Optimizer& disc_opt, GeneratorLoss form,
                              std::size_t step) {
  check_pair(teacher, student);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  if (disc.role() != Role::discriminator || disc.critic_mode()) {
    throw ContractError("joint distillation needs a discriminator with a sigmoid head");
  }
  const auto target = teacher_targets(teacher, z);
  Tape<float> tape;
  const auto fake = student.forward(&tape, z, NormMode::train);
  const DiscResult d = update_discriminator(disc, real, *fake, disc_opt, step);
  FrozenScope frozen(disc);
  const auto o = student_objective(&tape, fake, target, &disc, alpha, form, NormMode::train);
  check_finite(scalar(o.total), "joint loss", step);
  tape.backward(o.total);
  student_opt.step();
  return {{{"d_loss", d.loss}, {"adv", scalar(o.adv)}, {"mse", scalar(o.mse)}, {"joint", scalar(o.total)}}};
}

ParamGrads mse_gradient(const Network& teacher, Network& student, const TensorPtr<float>& z) {
  check_pair(teacher, student);
  const auto target = teacher_targets(teacher, z);
  return collect_grads(student, nullptr, [&](Tape<float>* t) {
    const auto fake = student.forward(t, z, NormMode::batch);
    return student_objective(t, fake, target, nullptr, 0.0, GeneratorLoss::non_saturating,
                             NormMode::batch)
        .total;
  });
}

ParamGrads adversarial_gradient(Network& student, Network& disc, const TensorPtr<float>& z,
                                GeneratorLoss form) {
  return collect_grads(student, &disc, [&](Tape<float>* t) {
    const auto fake = student.forward(t, z, NormMode::batch);
    return student_objective(t, fake, nullptr, &disc, 1.0, form, NormMode::batch).total;
  });
}

ParamGrads joint_gradient(const Network& teacher, Network& student, Network& disc,
                          const TensorPtr<float>& z, double alpha, GeneratorLoss form) {
  check_pair(teacher, student);
  const auto target = teacher_targets(teacher, z);
  return collect_grads(student, &disc, [&](Tape<float>* t) {
    const auto fake = student.forward(t, z, NormMode::batch);
    return student_objective(t, fake, target, &disc, alpha, form, NormMode::batch).total;
  });
}

void RunLog::record(std::size_t step, const StepLosses& losses, double wall_seconds) {
  if (!rows_.empty()) {
    if (step <= rows_.back().step) throw ContractError("RunLog steps must increase");
    if (wall_seconds < rows_.back().wall_seconds) throw ContractError("RunLog time went backwards");
    if (losses.values.size() != rows_.front().losses.size()) {
      throw ContractError("RunLog loss columns changed");
    }
  }
  rows_.push_back({step, losses.values, wall_seconds});
}

void RunLog::snapshot(std::size_t step, const std::vector<std::pair<std::string, double>>& metrics) {
  if (!snapshots_.empty() && step <= snapshots_.back().step) {
    throw ContractError("RunLog snapshot steps must increase");
  }
  snapshots_.push_back({step, metrics});
}

std::string RunLog::loss_csv() const {
  std::ostringstream os;
  os << "step,seed";
  if (!rows_.empty())
    for (const auto& [k, v] : rows_.front().losses) os << ',' << k;
  os << '\n';
  for (const auto& r : rows_) {
    os << r.step << ',' << seed_;
    for (const auto& [k, v] : r.losses) os << ',' << format_number(v);
    os << '\n';
  }
  return os.str();
}

std::string RunLog::timing_csv() const {
  std::ostringstream os;
  os << "step,wall_seconds\n";
  for (const auto& r : rows_) os << r.step << ',' << format_number(r.wall_seconds) << '\n';
  return os.str();
}

std::string RunLog::metrics_csv() const {
  std::ostringstream os;
  os << "step";
  if (!snapshots_.empty())
    for (const auto& [k, v] : snapshots_.front().metrics) os << ',' << k;
  os << '\n';
  for (const auto& s : snapshots_) {
    os << s.step;
    for (const auto& [k, v] : s.metrics) os << ',' << format_number(v);
    os << '\n';
  }
  return os.str();
}

BatchSampler::BatchSampler(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(data), batch_size_(batch_size), rng_(seed, 0x42415443ull) {
  if (data.size() < batch_size) {
    throw ConfigError("dataset '" + data.name + "' has " + std::to_string(data.size()) +
                      " images, fewer than the batch size " + std::to_string(batch_size));
  }
  order_.resize(data.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::swap(order_[i - 1], order_[rng_.below(i)]);
  }
  pos_ = 0;
}

TensorPtr<float> BatchSampler::next() {
  if (pos_ + batch_size_ > order_.size()) reshuffle();
  last_.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
               order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_size_));
  pos_ += batch_size_;
  return data_.batch(last_);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_data(const Network& gen, const Dataset& data) {
  const auto& s = gen.spec();
  if (data.channels != s.image_channels || data.height != s.image_size || data.width != s.image_size) {
    throw ConfigError("dataset '" + data.name + "' images are " + std::to_string(data.channels) + "x" +
                      std::to_string(data.height) + "x" + std::to_string(data.width) +
                      ", network expects " + std::to_string(s.image_channels) + "x" +
                      std::to_string(s.image_size) + "x" + std::to_string(s.image_size));
  }
}

// Shared bookkeeping for the training loops.
class Loop {
 public:
  Loop(const TrainConfig& c, const EvalHook& hook, RunLog& log)
      : c_(c), hook_(hook), log_(log), t0_(Clock::now()) {}

  void after(std::size_t step, const StepLosses& losses, const Network& gen) {
    const bool last = step == c_.steps;
    if (step % c_.log_interval == 0 || last) log_.record(step, losses, seconds_since(t0_));
    if (hook_ && c_.eval_interval > 0 && (step % c_.eval_interval == 0 || last)) {
      log_.snapshot(step, hook_(gen, step));
    }
  }

 private:
  const TrainConfig& c_;
  const EvalHook& hook_;
  RunLog& log_;
  Clock::time_point t0_;
};

}  // namespace

RunLog train_gan(Network& gen, Network& disc, const Dataset& data, const TrainConfig& config,
                 const EvalHook& hook, const CriticHook& on_critic_update) {
  config.validate();
  if (config.loss_kind != LossKind::gan && config.loss_kind != LossKind::wgan) {
    throw ConfigError("train_gan needs loss gan or wgan");
  }
  const bool wgan = config.loss_kind == LossKind::wgan;
  if (disc.critic_mode() != wgan) {
    throw ConfigError(wgan ? "wgan training needs a critic-mode discriminator"
                           : "gan training needs a sigmoid-head discriminator");
  }
  check_data(gen, data);

  LatentSampler latent(mix_seed(config.seed, 1), gen.spec().latent_dim);
  BatchSampler batches(data, config.batch_size, mix_seed(config.seed, 2));
  OptimizerSettings disc_settings = config.disc_optimizer;
  if (wgan) disc_settings.clip = static_cast<float>(config.clip);
  Optimizer gen_opt(config.gen_optimizer, gen.parameters());
  Optimizer disc_opt(disc_settings, disc.parameters());

  RunLog log(to_string(config.loss_kind), config.seed);
  Loop loop(config, hook, log);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    StepLosses losses;
    if (wgan) {
      std::vector<TensorPtr<float>> reals, zs;
      for (std::size_t k = 0; k < config.critic_steps; ++k) {
        reals.push_back(batches.next());
        zs.push_back(latent.sample(config.batch_size));
      }
      losses = wgan_step(gen, disc, reals, zs, latent.sample(config.batch_size), gen_opt, disc_opt, step,
                         on_critic_update);
    } else {
      const auto real = batches.next();
      losses = gan_step(gen, disc, real, latent.sample(config.batch_size), gen_opt, disc_opt,
                        config.generator_loss, step);
    }
    loop.after(step, losses, gen);
  }
  return log;
}

RunLog train_distill(const Network& teacher, Network& student, Network* disc, const Dataset* data,
                     const TrainConfig& config, const EvalHook& hook) {
  config.validate();
  const bool joint = config.loss_kind == LossKind::distill_joint;
  if (!joint && config.loss_kind != LossKind::distill_mse) {
    throw ConfigError("train_distill needs loss distill_mse or distill_joint");
  }
  check_pair(teacher, student);
  if (joint) {
    if (!disc || !data) throw ConfigError("joint distillation needs a discriminator and a dataset");
    check_data(student, *data);
  }

  LatentSampler latent(mix_seed(config.seed, 1), student.spec().latent_dim);
  Optimizer student_opt(config.gen_optimizer, student.parameters());
  std::optional<Optimizer> disc_opt;
  std::optional<BatchSampler> batches;
  if (joint) {
    disc_opt.emplace(config.disc_optimizer, disc->parameters());
    batches.emplace(*data, config.batch_size, mix_seed(config.seed, 2));
  }

  RunLog log(to_string(config.loss_kind), config.seed);
  Loop loop(config, hook, log);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto z = latent.sample(config.batch_size);
    StepLosses losses;
    if (joint) {
      const auto real = batches->next();
      losses = distill_joint_step(teacher, student, *disc, real, z, *config.alpha, student_opt,
                                  *disc_opt, config.generator_loss, step);
    } else {
      losses = distill_mse_step(teacher, student, z, student_opt, step);
    }
    loop.after(step, losses, student);
  }
  return log;
}

RunLog train_classifier(Network& classifier, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (classifier.role() != Role::classifier) throw ContractError("train_classifier needs a classifier");
  if (data.labels.empty()) throw ConfigError("classifier training needs a labeled dataset");
  if (data.num_classes != classifier.spec().num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes, classifier " +
                      std::to_string(classifier.spec().num_classes));
  }
  BatchSampler batches(data, config.batch_size, mix_seed(config.seed, 2));
  Optimizer opt(config.gen_optimizer, classifier.parameters());
  RunLog log("classifier", config.seed);
  const auto t0 = Clock::now();
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto x = batches.next();
    const auto labels = data.batch_labels(batches.last_indices());
    Tape<float> tape;
    const auto logits = classifier.logits(&tape, x, NormMode::train);
    const auto loss = ops::cross_entropy(&tape, logits, std::span<const int>(labels));
    check_finite(scalar(loss), "cross-entropy", step);
    tape.backward(loss);
    opt.step();
    if (step % config.log_interval == 0 || step == config.steps) {
      const std::size_t c = logits->dim(1);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = logits->data.begin() + static_cast<std::ptrdiff_t>(i * c);
        hits += static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row) == labels[i];
      }
      log.record(step, {{{"ce", scalar(loss)}, {"acc", double(hits) / double(labels.size())}}},
                 seconds_since(t0));
    }
  }
  return log;
}

double classifier_accuracy(const Network& classifier, const Dataset& data) {
  if (data.labels.empty()) throw ConfigError("accuracy needs a labeled dataset");
  constexpr std::size_t chunk = 250;
  std::size_t hits = 0;
  for (std::size_t lo = 0; lo < data.size(); lo += chunk) {
    const std::size_t m = std::min(chunk, data.size() - lo);
    const auto p = classifier.logits(nullptr, data.slice(lo, m), NormMode::eval);
    const std::size_t c = p->dim(1);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = p->data.begin() + static_cast<std::ptrdiff_t>(i * c);
      const auto arg = std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row;
      hits += arg == data.labels[lo + i];
    }
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::string to_string(SelectionMetric m) { return m == SelectionMetric::is ? "is" : "fid"; }

SelectionMetric selection_metric_from_string(const std::string& name) {
  if (name == "is") return SelectionMetric::is;
  if (name == "fid") return SelectionMetric::fid;
  throw ConfigError("unknown selection metric '" + name + "' (is, fid)");
}

std::size_t pick_best(std::span<const std::optional<double>> scores,
                      std::span<const std::size_t> depth_scales, SelectionMetric metric) {
  if (scores.size() != depth_scales.size()) throw ContractError("pick_best: size mismatch");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i]) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double a = *scores[i], b = *scores[*best];
    const bool better = metric == SelectionMetric::is ? a > b : a < b;
    if (better || (a == b && depth_scales[i] < depth_scales[*best])) best = i;
  }
  if (!best) throw NumericError("teacher selection: every candidate failed");
  return *best;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

TeacherSelection select_teacher(std::span<const std::size_t> grid, const Dataset& data,
                                const Network& classifier, const FeatureStats& real_stats,
                                const SelectionSetup& setup) {
  if (grid.empty()) throw ConfigError("teacher grid is empty");
  if (setup.metric == SelectionMetric::is && data.labels.empty()) {
    throw ConfigError("metric 'is' needs a labeled dataset to train the scoring classifier");
  }
  setup.config.validate();
  TeacherSelection sel;
  sel.metric = setup.metric;
  sel.candidates.resize(grid.size());
  const bool wgan = setup.config.loss_kind == LossKind::wgan;

  parallel_for(grid.size(), setup.threads, [&](std::size_t i) {
    TeacherCandidate& c = sel.candidates[i];
    c.d = grid[i];
    c.seed = setup.config.seed + i;
    try {
      NetworkSpec gs = setup.generator_spec;
      gs.role = Role::generator;
      gs.depth_scale = c.d;
      NetworkSpec ds = gs;
      ds.role = Role::discriminator;
      ds.depth_scale = setup.disc_depth_scale ? setup.disc_depth_scale : c.d;
      Network gen = Network::build(gs, false, mix_seed(c.seed, 10));
      Network disc = Network::build(ds, wgan, mix_seed(c.seed, 11));
      TrainConfig cfg = setup.config;
      cfg.seed = c.seed;
      c.log = train_gan(gen, disc, data, cfg);
      c.evaluation = evaluate_generator(gen, classifier, real_stats, setup.evaluation);
      c.generator.emplace(std::move(gen));
    } catch (const Error& e) {
      c.failure = e.what();
      c.evaluation.reset();
    }
  });

  std::vector<std::optional<double>> scores;
  std::vector<std::size_t> ds;
  for (const auto& c : sel.candidates) {
    ds.push_back(c.d);
    if (!c.evaluation) {
      scores.emplace_back();
    } else {
      scores.emplace_back(setup.metric == SelectionMetric::is ? c.evaluation->is.mean : c.evaluation->fid);
    }
  }
  sel.best = pick_best(scores, ds, setup.metric);
  return sel;
}

}  // namespace distillgan
