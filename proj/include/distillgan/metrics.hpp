#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "distillgan/linalg.hpp"
#include "distillgan/network.hpp"
#include "distillgan/tensor.hpp"

namespace distillgan {

enum class IsMode {
  exp_kl,         // exp(E_x KL(p(y|x) || p(y)))
  cross_entropy,  // E_x H(p(y), p(y|x)), the literal alternative
};

struct ScoreSummary {
  double mean = 0.0;
  double std = 0.0;  // population std over splits
};

// probs is [N, C] with rows summing to 1. Samples are split into `splits`
// contiguous chunks (sizes differ by at most one); logs use an additive 1e-12
// floor.
ScoreSummary inception_score(const Tensor<float>& probs, std::size_t splits = 1,
                             IsMode mode = IsMode::exp_kl);
ScoreSummary inception_score(const std::vector<std::vector<double>>& probs, std::size_t splits = 1,
                             IsMode mode = IsMode::exp_kl);

struct FeatureStats {
  std::vector<double> mean;
  Matrix cov;  // unbiased, divisor N - 1
};

// Mean and covariance of the rows of `features` [N, F]; N >= 2.
FeatureStats feature_stats(const std::vector<std::vector<double>>& features);
FeatureStats feature_stats(const Tensor<float>& features);
// Classifier penultimate features of `images`, evaluated in chunks.
FeatureStats feature_stats(const Tensor<float>& images, const Network& classifier);

// ||mu_r - mu_g||^2 + tr(S_r) + tr(S_g) - 2 tr((S_g^1/2 S_r S_g^1/2)^1/2), clamped >= 0.
double fid(const FeatureStats& real, const FeatureStats& gen);

// Population variance of the 3x3 Laplacian response over the valid region.
// Accepts [H, W], [C, H, W] or [1, C, H, W]; channels are averaged first.
double variance_of_laplacian(const Tensor<float>& image);
// Mean VoL over the images of a [N, C, H, W] batch.
double mean_variance_of_laplacian(const Tensor<float>& images);

struct CompressionRatio {
  double value = 0.0;
  std::string text;  // "round(value):1"
};
CompressionRatio compression_ratio(std::size_t teacher_params, std::size_t student_params);

struct MetricsReport {
  std::string model_id;
  std::size_t d = 0;
  std::size_t params = 0;
  std::optional<double> is_mean;
  std::optional<double> is_std;
  std::optional<double> fid;
  double vol = 0.0;
  std::string ratio;                // compression ratio vs teacher
  std::optional<double> vol_ratio;  // VoL student / VoL teacher
};

inline constexpr const char* kMetricsHeader = "model_id,d,params,is_mean,is_std,fid,vol,ratio";
inline constexpr const char* kVolRatioHeader = "model_id,teacher_id,vol_ratio";

std::string metrics_csv(const std::vector<MetricsReport>& rows);
std::string vol_ratio_csv(const std::vector<MetricsReport>& rows, const std::string& teacher_id);
// Fixed-format number used in every CSV the toolkit writes.
std::string format_number(double v);

struct EvaluationSettings {
  std::size_t samples = 1000;
  std::size_t splits = 10;
  std::uint64_t seed = 0;
  IsMode is_mode = IsMode::exp_kl;
};

struct GeneratorEvaluation {
  ScoreSummary is;
  double fid = 0.0;
  double vol = 0.0;
};

// Samples `settings.samples` images from the generator with a latent stream
// keyed by settings.seed and scores them with the classifier against
// `real` statistics.
GeneratorEvaluation evaluate_generator(const Network& generator, const Network& classifier,
                                       const FeatureStats& real,
                                       const EvaluationSettings& settings);

// Generator samples for a latent stream, produced in fixed-size chunks.
TensorPtr<float> sample_images(const Network& generator, std::size_t n, std::uint64_t seed);

}  // namespace distillgan
