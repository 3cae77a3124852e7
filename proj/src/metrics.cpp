#include "distillgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "distillgan/error.hpp"
#include "distillgan/random.hpp"

namespace distillgan {
namespace {

constexpr double kLogFloor = 1e-12;
constexpr std::size_t kChunk = 250;

std::vector<std::vector<double>> rows_of(const Tensor<float>& t) {
  if (t.rank() != 2) throw ShapeError("expected a [N, F] matrix, got " + shape_str(t.shape));
  const std::size_t n = t.dim(0), f = t.dim(1);
  std::vector<std::vector<double>> rows(n, std::vector<double>(f));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) rows[i][j] = t.data[i * f + j];
  return rows;
}

}  // namespace

ScoreSummary inception_score(const std::vector<std::vector<double>>& probs, std::size_t splits,
                             IsMode mode) {
  const std::size_t n = probs.size();
  if (splits < 1 || n < splits) {
    throw ContractError("inception_score needs N >= splits >= 1 (N = " + std::to_string(n) +
                        ", splits = " + std::to_string(splits) + ")");
  }
  const std::size_t c = probs[0].size();
  for (const auto& row : probs) {
    if (row.size() != c) throw ShapeError("inception_score: ragged probability rows");
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw NumericError("inception_score: negative or NaN probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-5) throw ContractError("inception_score: row does not sum to 1");
  }

  std::vector<double> scores;
  for (std::size_t k = 0; k < splits; ++k) {
    const std::size_t lo = k * n / splits, hi = (k + 1) * n / splits;
    std::vector<double> marginal(c, 0.0);
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < c; ++j) marginal[j] += probs[i][j];
    for (double& m : marginal) m /= static_cast<double>(hi - lo);

    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double term = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double p = probs[i][j];
        if (mode == IsMode::exp_kl) {
          term += p * (std::log(p + kLogFloor) - std::log(marginal[j] + kLogFloor));
        } else {
          term -= marginal[j] * std::log(p + kLogFloor);
        }
      }
      acc += term;
    }
    acc /= static_cast<double>(hi - lo);
    scores.push_back(mode == IsMode::exp_kl ? std::exp(acc) : acc);
  }

  ScoreSummary out;
  for (double s : scores) out.mean += s;
  out.mean /= static_cast<double>(splits);
  double var = 0.0;
  for (double s : scores) var += (s - out.mean) * (s - out.mean);
  out.std = std::sqrt(var / static_cast<double>(splits));
  return out;
}

ScoreSummary inception_score(const Tensor<float>& probs, std::size_t splits, IsMode mode) {
  return inception_score(rows_of(probs), splits, mode);
}

FeatureStats feature_stats(const std::vector<std::vector<double>>& features) {
  const std::size_t n = features.size();
  if (n < 2) throw ContractError("feature_stats needs at least 2 samples for a covariance");
  const std::size_t f = features[0].size();
  FeatureStats s;
  s.mean.assign(f, 0.0);
  for (const auto& row : features) {
    if (row.size() != f) throw ShapeError("feature_stats: ragged feature rows");
    for (std::size_t j = 0; j < f; ++j) s.mean[j] += row[j];
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  s.cov = Matrix(f, f);
  for (const auto& row : features)
    for (std::size_t a = 0; a < f; ++a) {
      const double da = row[a] - s.mean[a];
      for (std::size_t b = a; b < f; ++b) s.cov(a, b) += da * (row[b] - s.mean[b]);
    }
  for (std::size_t a = 0; a < f; ++a)
    for (std::size_t b = a; b < f; ++b) {
      s.cov(a, b) /= static_cast<double>(n - 1);
      s.cov(b, a) = s.cov(a, b);
    }
  return s;
}

FeatureStats feature_stats(const Tensor<float>& features) { return feature_stats(rows_of(features)); }

FeatureStats feature_stats(const Tensor<float>& images, const Network& classifier) {
  if (images.rank() != 4) throw ShapeError("feature_stats expects images [N, C, H, W]");
  const std::size_t n = images.dim(0), per = images.numel() / n;
  std::vector<std::vector<double>> rows;
  rows.reserve(n);
  for (std::size_t lo = 0; lo < n; lo += kChunk) {
    const std::size_t m = std::min(kChunk, n - lo);
    Shape shape = images.shape;
    shape[0] = m;
    std::vector<float> chunk(images.data.begin() + static_cast<std::ptrdiff_t>(lo * per),
                             images.data.begin() + static_cast<std::ptrdiff_t>((lo + m) * per));
    const auto feats = classifier.features(make_tensor<float>(shape, std::move(chunk)));
    auto r = rows_of(*feats);
    rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  return feature_stats(rows);
}

double fid(const FeatureStats& real, const FeatureStats& gen) {
  const std::size_t f = real.mean.size();
  if (gen.mean.size() != f || real.cov.rows() != f || gen.cov.rows() != f) {
    throw ContractError("fid: feature dimensions differ");
  }
  // Identical statistics are at distance exactly 0; the general path below
  // leaves rounding residue of order 1e-15 * trace.
  if (real.mean == gen.mean && real.cov.data() == gen.cov.data()) return 0.0;
  double mean_term = 0.0;
  for (std::size_t i = 0; i < f; ++i) {
    const double d = real.mean[i] - gen.mean[i];
    mean_term += d * d;
  }
  const Matrix root_g = matrix_sqrt_psd(gen.cov);
  Matrix inner = root_g * real.cov * root_g;
  // Symmetric in exact arithmetic; remove rounding asymmetry.
  inner = 0.5 * (inner + inner.transpose());
  double cross = 0.0;
  for (double l : symmetric_eigen(inner).values) cross += std::sqrt(std::max(l, 0.0));
  const double value = mean_term + real.cov.trace() + gen.cov.trace() - 2.0 * cross;
  if (!std::isfinite(value)) throw NumericError("fid: non-finite result");
  return std::max(value, 0.0);
}

double variance_of_laplacian(const Tensor<float>& image) {
  std::size_t c = 1, h = 0, w = 0;
  if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3 || (image.rank() == 4 && image.dim(0) == 1)) {
    const std::size_t o = image.rank() - 3;
    c = image.dim(o);
    h = image.dim(o + 1);
    w = image.dim(o + 2);
  } else {
    throw ShapeError("variance_of_laplacian expects a single image, got " + shape_str(image.shape));
  }
  if (h < 3 || w < 3) throw ContractError("variance_of_laplacian needs an image of at least 3x3");

  std::vector<double> gray(h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) gray[i] += image.data[ch * h * w + i];
  for (double& g : gray) g /= static_cast<double>(c);

  std::vector<double> resp;
  resp.reserve((h - 2) * (w - 2));
  for (std::size_t y = 1; y + 1 < h; ++y)
    for (std::size_t x = 1; x + 1 < w; ++x) {
      resp.push_back(gray[(y - 1) * w + x] + gray[(y + 1) * w + x] + gray[y * w + x - 1] +
                     gray[y * w + x + 1] - 4.0 * gray[y * w + x]);
    }
  double mean = 0.0;
  for (double r : resp) mean += r;
  mean /= static_cast<double>(resp.size());
  double var = 0.0;
  for (double r : resp) var += (r - mean) * (r - mean);
  return var / static_cast<double>(resp.size());
}

double mean_variance_of_laplacian(const Tensor<float>& images) {
  if (images.rank() != 4 || images.dim(0) == 0) {
    throw ShapeError("mean_variance_of_laplacian expects [N, C, H, W]");
  }
  const std::size_t n = images.dim(0), per = images.numel() / n;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> one({1, images.dim(1), images.dim(2), images.dim(3)},
                      std::vector<float>(images.data.begin() + static_cast<std::ptrdiff_t>(i * per),
                                         images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)));
    acc += variance_of_laplacian(one);
  }
  return acc / static_cast<double>(n);
}

CompressionRatio compression_ratio(std::size_t teacher_params, std::size_t student_params) {
  if (student_params == 0 || teacher_params == 0) {
    throw ContractError("compression_ratio needs nonzero parameter counts");
  }
  CompressionRatio r;
  r.value = static_cast<double>(teacher_params) / static_cast<double>(student_params);
  r.text = std::to_string(static_cast<long long>(std::llround(r.value))) + ":1";
  return r;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metrics_csv(const std::vector<MetricsReport>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.model_id << ',' << r.d << ',' << r.params << ',' << opt(r.is_mean) << ','
       << opt(r.is_std) << ',' << opt(r.fid) << ',' << format_number(r.vol) << ',' << r.ratio
       << '\n';
  }
  return os.str();
}

std::string vol_ratio_csv(const std::vector<MetricsReport>& rows, const std::string& teacher_id) {
  std::ostringstream os;
  os << kVolRatioHeader << '\n';
  for (const auto& r : rows) {
    if (r.vol_ratio) os << r.model_id << ',' << teacher_id << ',' << format_number(*r.vol_ratio) << '\n';
  }
  return os.str();
}

TensorPtr<float> sample_images(const Network& generator, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("sample_images: n must be positive");
  LatentSampler sampler(seed, generator.spec().latent_dim);
  const auto& s = generator.spec();
  const std::size_t per = s.image_channels * s.image_size * s.image_size;
  auto out = zeros<float>({n, s.image_channels, s.image_size, s.image_size});
  for (std::size_t lo = 0; lo < n; lo += kChunk) {
    const std::size_t m = std::min(kChunk, n - lo);
    const auto imgs = generate(generator, sampler.sample(m));
    std::copy(imgs->data.begin(), imgs->data.end(),
              out->data.begin() + static_cast<std::ptrdiff_t>(lo * per));
  }
  return out;
}

GeneratorEvaluation evaluate_generator(const Network& generator, const Network& classifier,
                                       const FeatureStats& real,
                                       const EvaluationSettings& settings) {
  if (classifier.role() != Role::classifier) throw ContractError("evaluation needs a classifier");
  const auto& gs = generator.spec();
  const auto& cs = classifier.spec();
  if (gs.image_size != cs.image_size || gs.image_channels != cs.image_channels) {
    throw ContractError("generator and classifier image shapes differ");
  }
  const auto images = sample_images(generator, settings.samples, settings.seed);
  const std::size_t per = images->numel() / settings.samples;

  std::vector<std::vector<double>> probs;
  probs.reserve(settings.samples);
  for (std::size_t lo = 0; lo < settings.samples; lo += kChunk) {
    const std::size_t m = std::min(kChunk, settings.samples - lo);
    auto chunk = make_tensor<float>(
        {m, gs.image_channels, gs.image_size, gs.image_size},
        std::vector<float>(images->data.begin() + static_cast<std::ptrdiff_t>(lo * per),
                           images->data.begin() + static_cast<std::ptrdiff_t>((lo + m) * per)));
    auto p = rows_of(*classifier.forward(nullptr, chunk, ops::NormMode::eval));
    probs.insert(probs.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }

  GeneratorEvaluation ev;
  ev.is = inception_score(probs, settings.splits, settings.is_mode);
  ev.fid = fid(real, feature_stats(*images, classifier));
  ev.vol = mean_variance_of_laplacian(*images);
  return ev;
}

}  // namespace distillgan
