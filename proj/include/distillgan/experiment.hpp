#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "distillgan/dataset.hpp"
#include "distillgan/metrics.hpp"
#include "distillgan/network.hpp"
#include "distillgan/training.hpp"

namespace distillgan {

struct DataConfig {
  std::string kind = "synth_shapes";  // synth_shapes | idx
  std::size_t image_size = 16;
  std::size_t count = 6000;     // synth_shapes training images
  std::size_t holdout = 1000;   // images reserved for classifier checks and real feature stats
  std::uint64_t seed = 1;       // synth_shapes
  std::filesystem::path images;  // idx
  std::filesystem::path labels;  // idx, optional
};

struct ClassifierConfig {
  std::size_t d = 4;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  OptimizerSettings optimizer = [] {
    auto o = OptimizerSettings::adam(2e-3f);
    o.beta1 = 0.9f;
    return o;
  }();
};

struct TeacherConfig {
  std::vector<std::size_t> grid = {16};
  std::size_t disc_d = 0;  // 0: same as the candidate
  std::size_t steps = 3000;
  LossKind loss = LossKind::gan;  // gan | wgan
  SelectionMetric metric = SelectionMetric::fid;
  std::optional<std::filesystem::path> checkpoint;  // default <out>/teacher.ckpt
};

struct StudentConfig {
  std::vector<std::size_t> d = {2};
  std::vector<LossKind> losses = {LossKind::distill_mse};
  std::optional<double> alpha;
  bool control = true;
  std::size_t steps = 3000;
};

struct ExperimentConfig {
  DataConfig data;
  ClassifierConfig classifier;
  TeacherConfig teacher;
  StudentConfig student;
  std::size_t latent_dim = 100;
  std::size_t batch_size = 64;
  // Adversarial runs (teachers, controls, joint discriminators).
  OptimizerSettings gan_optimizer = OptimizerSettings::adam();
  // Student generator updates under distill_mse / distill_joint.
  OptimizerSettings distill_optimizer = [] {
    auto o = OptimizerSettings::adam(3e-3f);
    o.beta1 = 0.9f;
    return o;
  }();
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  EvaluationSettings evaluation{1000, 10, 99, IsMode::exp_kl};
  std::size_t interpolation_steps = 8;
  std::filesystem::path out = "runs/default";
  std::size_t threads = 1;

  // Throws ConfigError on the first violated rule.
  void validate() const;
  std::filesystem::path teacher_path() const;
  std::filesystem::path classifier_path() const { return out / "classifier.ckpt"; }
};

// Parses the JSON schema documented in the README. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

struct ExperimentData {
  Dataset train;
  Dataset holdout;
};
ExperimentData load_experiment_data(const DataConfig& config);

// Model identifiers used for file names and report rows.
std::string student_id(LossKind loss, std::size_t d, std::uint64_t seed);
std::string control_id(std::size_t d, std::uint64_t seed);

// Seeds of the per-cell networks; student and control share the generator init.
std::uint64_t student_init_seed(std::uint64_t seed, std::size_t d);
std::uint64_t student_disc_seed(std::uint64_t seed, std::size_t d);

struct ClassifierResult {
  double holdout_accuracy = 0.0;
};
ClassifierResult cmd_train_classifier(const ExperimentConfig& config);

TeacherSelection cmd_train_teacher(const ExperimentConfig& config);

struct DistillCell {
  std::string id;
  std::filesystem::path checkpoint;
  RunLog log;
};
std::vector<DistillCell> cmd_distill(const ExperimentConfig& config);

struct EvaluationReport {
  std::vector<MetricsReport> rows;  // teacher first
  std::string metrics_csv;
  std::string vol_ratio_csv;
};
EvaluationReport cmd_evaluate(const ExperimentConfig& config);

struct Interpolation {
  std::vector<double> t;
  TensorPtr<float> z;              // [k, latent_dim]
  TensorPtr<float> teacher_row;    // [k, C, H, W]
  TensorPtr<float> student_row;
  std::vector<double> column_mse;  // teacher vs student per column
};
// z(t) = (1 - t) z0 + t z1 for t = 0, 1/(k-1), ..., 1, with z0 and z1 the
// first two draws of LatentSampler(seed).
Interpolation interpolate(const Network& teacher, const Network& student, std::size_t k,
                          std::uint64_t seed);
// Writes a 2 x k grid (teacher row over student row) and a per-column CSV.
Interpolation cmd_interpolate(const std::filesystem::path& teacher_ckpt,
                              const std::filesystem::path& student_ckpt, std::size_t k,
                              std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace distillgan
