#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distillgan/dataset.hpp"
#include "distillgan/metrics.hpp"
#include "distillgan/network.hpp"
#include "distillgan/optimizer.hpp"
#include "distillgan/random.hpp"
#include "distillgan/tape.hpp"

namespace distillgan {

enum class LossKind { gan, wgan, distill_mse, distill_joint };
enum class GeneratorLoss { non_saturating, saturating };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);  // also accepts "mse", "joint"

inline constexpr double kDefaultJointAlpha = 1e-4;

struct TrainConfig {
  LossKind loss_kind = LossKind::gan;
  std::optional<double> alpha;  // joint only
  double clip = 0.01;           // wgan critic clip bound c
  std::size_t critic_steps = 5;  // k, wgan only
  std::size_t batch_size = 64;
  std::size_t steps = 1000;  // generator updates
  OptimizerSettings gen_optimizer = OptimizerSettings::adam();
  OptimizerSettings disc_optimizer = OptimizerSettings::adam();
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
  std::uint64_t seed = 0;
  std::size_t log_interval = 10;  // RunLog loss rows every n steps (and at the last step)
  std::size_t eval_interval = 0;  // metric snapshots every n steps, 0 = off

  // WGAN defaults: RMSProp 5e-5, c = 0.01, k = 5.
  static TrainConfig wgan_defaults();
  void validate() const;
};

// Loss values of one step; names follow RunLog columns.
struct StepLosses {
  std::vector<std::pair<std::string, double>> values;
  double get(const std::string& name) const;
};

// Minimization-form discriminator loss -[E log D(x) + E log(1 - D(G(z)))]
// from logits.
TensorPtr<float> discriminator_loss(Tape<float>* tape, const TensorPtr<float>& real_logits,
                                    const TensorPtr<float>& fake_logits);
// Generator loss from discriminator logits on fakes: -E log D(G(z))
// (non-saturating) or E log(1 - D(G(z))) (saturating).
TensorPtr<float> generator_adversarial_loss(Tape<float>* tape, const TensorPtr<float>& fake_logits,
                                            GeneratorLoss form);

// Maximization-form discriminator objective E[log D(x)] + E[log(1 - D(G(z)))]
// from discriminator outputs.
double discriminator_objective(std::span<const float> d_real, std::span<const float> d_fake);

// One discriminator update on (real, G(z)) followed by one generator update.
// Columns: d_loss (minimization form), g_loss, d_real, d_fake (mean outputs).
StepLosses gan_step(Network& gen, Network& disc, const TensorPtr<float>& real,
                    const TensorPtr<float>& z, Optimizer& gen_opt, Optimizer& disc_opt,
                    GeneratorLoss form = GeneratorLoss::non_saturating, std::size_t step = 0);

// E[f(real)] - E[f(fake)] without updating anything (batch statistics, frozen).
double critic_objective(const Network& critic, const TensorPtr<float>& real,
                        const TensorPtr<float>& fake);

// k = real_batches.size() critic updates, each on (real_batches[i],
// G(critic_z[i])) and each followed by clipping to the critic optimizer's
// bound, then one generator update on gen_z. Columns: wasserstein (critic
// estimate on the last critic batch), critic_loss, g_loss.
// Observer called after every individual critic update.
using CriticHook = std::function<void(const Network& critic)>;

StepLosses wgan_step(Network& gen, Network& critic, std::span<const TensorPtr<float>> real_batches,
                     std::span<const TensorPtr<float>> critic_z, const TensorPtr<float>& gen_z,
                     Optimizer& gen_opt, Optimizer& critic_opt, std::size_t step = 0,
                     const CriticHook& on_critic_update = {});

// Teacher outputs used as regression targets. The teacher runs without a tape
// and with NormMode::batch, so it is never modified.
TensorPtr<float> teacher_targets(const Network& teacher, const TensorPtr<float>& z);

// One student update on mean((teacher(z) - student(z))^2). Column: mse.
StepLosses distill_mse_step(const Network& teacher, Network& student, const TensorPtr<float>& z,
                            Optimizer& opt, std::size_t step = 0);

// Discriminator update as in gan_step (student samples as fakes), then one
// student update on alpha * adversarial + (1 - alpha) * mse.
// Columns: d_loss, adv, mse, joint.
StepLosses distill_joint_step(const Network& teacher, Network& student, Network& disc,
                              const TensorPtr<float>& real, const TensorPtr<float>& z, double alpha,
                              Optimizer& student_opt, Optimizer& disc_opt,
                              GeneratorLoss form = GeneratorLoss::non_saturating,
                              std::size_t step = 0);

// Student parameter gradients of the individual objectives, computed with
// batch statistics and without touching any weights or running averages.
// Each inner vector matches one parameter tensor.
using ParamGrads = std::vector<std::vector<float>>;
ParamGrads mse_gradient(const Network& teacher, Network& student, const TensorPtr<float>& z);
ParamGrads adversarial_gradient(Network& student, Network& disc, const TensorPtr<float>& z,
                                GeneratorLoss form = GeneratorLoss::non_saturating);
ParamGrads joint_gradient(const Network& teacher, Network& student, Network& disc,
                          const TensorPtr<float>& z, double alpha,
                          GeneratorLoss form = GeneratorLoss::non_saturating);

// Step-indexed loss records plus optional metric snapshots. The loss CSV is
// a pure function of config and seeds; wall-clock lives in a separate CSV.
class RunLog {
 public:
  RunLog() = default;
  RunLog(std::string run_id, std::uint64_t seed) : run_id_(std::move(run_id)), seed_(seed) {}

  void record(std::size_t step, const StepLosses& losses, double wall_seconds);
  void snapshot(std::size_t step, const std::vector<std::pair<std::string, double>>& metrics);

  struct Row {
    std::size_t step;
    std::vector<std::pair<std::string, double>> losses;
    double wall_seconds;
  };
  struct Snapshot {
    std::size_t step;
    std::vector<std::pair<std::string, double>> metrics;
  };

  const std::string& run_id() const { return run_id_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }

  // step,seed,<loss columns>
  std::string loss_csv() const;
  // step,wall_seconds
  std::string timing_csv() const;
  // step,<metric columns>
  std::string metrics_csv() const;

 private:
  std::string run_id_;
  std::uint64_t seed_ = 0;
  std::vector<Row> rows_;
  std::vector<Snapshot> snapshots_;
};

// Called every eval_interval steps and after the last step.
using EvalHook =
    std::function<std::vector<std::pair<std::string, double>>(const Network& gen, std::size_t step)>;

// Shuffled mini-batches over a dataset, reshuffled every epoch.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, std::size_t batch_size, std::uint64_t seed);
  TensorPtr<float> next();
  // Indices of the batch most recently returned by next().
  const std::vector<std::size_t>& last_indices() const { return last_; }

 private:
  void reshuffle();
  const Dataset& data_;
  std::size_t batch_size_;
  RandomStream rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> last_;
};

// Adversarial training (gan or wgan per config.loss_kind) of gen against disc.
RunLog train_gan(Network& gen, Network& disc, const Dataset& data, const TrainConfig& config,
                 const EvalHook& hook = {}, const CriticHook& on_critic_update = {});

// Distillation (distill_mse or distill_joint). disc and data are needed for
// the joint loss only.
RunLog train_distill(const Network& teacher, Network& student, Network* disc, const Dataset* data,
                     const TrainConfig& config, const EvalHook& hook = {});

// Cross-entropy training of a classifier. Columns: ce, acc (batch accuracy).
RunLog train_classifier(Network& classifier, const Dataset& data, const TrainConfig& config);
double classifier_accuracy(const Network& classifier, const Dataset& data);

enum class SelectionMetric { is, fid };
std::string to_string(SelectionMetric m);
SelectionMetric selection_metric_from_string(const std::string& name);

// Index of the best score (max IS / min FID); failed candidates (nullopt) are
// skipped and ties go to the smaller depth scale. Throws if all failed.
std::size_t pick_best(std::span<const std::optional<double>> scores,
                      std::span<const std::size_t> depth_scales, SelectionMetric metric);

struct TeacherCandidate {
  std::size_t d = 0;
  std::uint64_t seed = 0;
  std::optional<Network> generator;
  RunLog log;
  std::optional<GeneratorEvaluation> evaluation;
  std::string failure;  // empty on success
};

struct TeacherSelection {
  std::size_t best = 0;
  SelectionMetric metric = SelectionMetric::fid;
  std::vector<TeacherCandidate> candidates;
};

struct SelectionSetup {
  NetworkSpec generator_spec;        // depth_scale is replaced per candidate
  std::size_t disc_depth_scale = 0;  // 0: same as the candidate generator
  TrainConfig config;                // seed + index per candidate
  SelectionMetric metric = SelectionMetric::fid;
  EvaluationSettings evaluation;
  std::size_t threads = 1;
};

// Trains one GAN per depth scale in `grid`, scores each with the classifier
// and picks the best.
TeacherSelection select_teacher(std::span<const std::size_t> grid, const Dataset& data,
                                const Network& classifier, const FeatureStats& real_stats,
                                const SelectionSetup& setup);

// Runs fn(i) for i in [0, n) on up to `threads` worker threads. Exceptions are
// rethrown in index order after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace distillgan
