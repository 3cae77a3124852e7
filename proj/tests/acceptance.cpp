// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)
// DISTILLGAN_ACCEPTANCE_OUT sets the working directory of the pipeline runs.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "distillgan/checkpoint.hpp"
#include "distillgan/error.hpp"
#include "distillgan/experiment.hpp"
#include "distillgan/grad_check.hpp"
#include "distillgan/linalg.hpp"
#include "distillgan/metrics.hpp"
#include "distillgan/network.hpp"
#include "distillgan/training.hpp"
#include "layer_cases.hpp"
#include "metric_oracles.hpp"

using namespace distillgan;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::size_t checks = 0, failed = 0;
  double worst = 0.0;
  std::string worst_case;
  for (const auto& kind : testing::layer_kinds())
    for (std::uint64_t shape_seed = 0; shape_seed < 10; ++shape_seed) {
      const auto c = testing::make_layer_case<float>(kind, 1000 + shape_seed);
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = grad_check<float>(c.fragment, c.wrt, 3e-3f, 1e-3, seed);
        ++checks;
        failed += !r.passed;
        if (r.max_rel_error > worst) {
          worst = r.max_rel_error;
          worst_case = c.description;
        }
      }
    }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 60.0,
          fmt("%zu kinds, %zu checks, %zu failed, max rel err %.2e (%s), %.1f s", testing::layer_kinds().size(),
              checks, failed, worst, worst_case.c_str(), secs)};
}

Outcome fid_oracle() {
  RandomStream rng(2024, 2);
  double worst_rel = 0.0, worst_sym = 0.0, worst_self = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t f = 1 + rng.below(8);
    std::vector<double> mr(f), vr(f), mg(f), vg(f);
    for (std::size_t i = 0; i < f; ++i) {
      mr[i] = 2 * rng.normal();
      mg[i] = 2 * rng.normal();
      vr[i] = 0.01 + 4 * rng.uniform();
      vg[i] = 0.01 + 4 * rng.uniform();
    }
    const FeatureStats r{mr, Matrix::diagonal(vr)}, g{mg, Matrix::diagonal(vg)};
    const double oracle = testing::diagonal_fid(mr, vr, mg, vg);
    worst_rel = std::max(worst_rel, std::abs(fid(r, g) - oracle) / oracle);
    worst_sym = std::max(worst_sym, std::abs(fid(r, g) - fid(g, r)));
    worst_self = std::max({worst_self, fid(r, r), fid(g, g)});
  }
  return {worst_rel <= 1e-6 && worst_sym <= 1e-8 && worst_self == 0.0,
          fmt("50 pairs: max rel err %.2e, max asymmetry %.2e, max fid(a,a) %.2e", worst_rel, worst_sym, worst_self)};
}

Outcome matrix_sqrt() {
  const auto t0 = Clock::now();
  RandomStream rng(2024, 3);
  double worst = 0.0;
  std::size_t largest = 0;
  for (int t = 0; t < 100; ++t) {
    // Sizes spread over [1, 64] with the last few at the maximum.
    const std::size_t n = t >= 95 ? 64 : 1 + rng.below(64);
    const std::size_t rank = t % 4 == 0 ? std::max<std::size_t>(1, n / 2) : n;
    const Matrix a = testing::random_psd(rng, n, rank);
    const Matrix s = matrix_sqrt_psd(a);
    worst = std::max(worst, testing::rel_frobenius(s * s, a));
    largest = std::max(largest, n);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 30.0,
          fmt("100 matrices up to %zux%zu: max rel Frobenius err %.2e, %.2f s", largest, largest, worst, secs)};
}

Outcome inception_cases() {
  std::vector<std::vector<double>> uniform(200, std::vector<double>(10, 0.1));
  const double u = inception_score(uniform).mean;
  std::vector<std::vector<double>> onehot(1000, std::vector<double>(10, 0.0));
  for (std::size_t i = 0; i < onehot.size(); ++i) onehot[i][i % 10] = 1.0;
  const double o = inception_score(onehot).mean;
  RandomStream rng(2024, 4);
  std::size_t violations = 0;
  double lo = 1e300, hi = 0.0;
  for (int b = 0; b < 1000; ++b) {
    const std::size_t n = 2 + rng.below(64), c = 2 + rng.below(15);
    std::vector<std::vector<double>> p(n, std::vector<double>(c));
    const double temp = b % 3 == 0 ? 6.0 : 1.0;
    for (auto& row : p) {
      double s = 0.0;
      for (auto& v : row) s += v = std::exp(temp * rng.normal());
      for (auto& v : row) v /= s;
    }
    const double is = inception_score(p).mean;
    lo = std::min(lo, is);
    hi = std::max(hi, is / double(c));
    violations += !(is >= 1.0 - 1e-12 && is <= double(c) + 1e-9);
  }
  return {std::abs(u - 1.0) <= 1e-9 && std::abs(o - 10.0) <= 1e-6 && violations == 0,
          fmt("uniform %.12f, one-hot %.9f, 1000 random batches: %zu bound violations (min IS %.6f, max IS/C %.6f)",
              u, o, violations, lo, hi)};
}

Outcome vol_cases() {
  const double constant = variance_of_laplacian(*full<float>({16, 16}, 0.42f));
  Tensor<float> board({4, 4}, std::vector<float>(16));
  for (std::size_t i = 0; i < 16; ++i) board.data[i] = float((i / 4 + i % 4) % 2);
  const double checker = variance_of_laplacian(board);
  RandomStream rng(2024, 5);
  std::size_t ok = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t h = 8 + rng.below(25), w = 8 + rng.below(25);
    Tensor<float> img({h, w}, std::vector<float>(h * w));
    for (auto& v : img.data) v = float(2 * rng.uniform() - 1);
    ok += variance_of_laplacian(testing::gaussian_blur(img, 1.0)) < variance_of_laplacian(img);
  }
  return {constant == 0.0 && checker == 16.0 && ok == 100,
          fmt("constant %g, 4x4 checkerboard %g, blur lowers VoL in %zu/100 images", constant, checker, ok)};
}

Outcome scaling_law() {
  bool pass = true;
  std::string detail = "image 64:";
  for (Role role : {Role::generator, Role::discriminator, Role::classifier}) {
    detail += " " + to_string(role);
    for (std::size_t d : {8, 16, 32}) {
      NetworkSpec s;
      s.role = role;
      s.image_size = 64;
      s.num_classes = role == Role::classifier ? 10 : 0;
      s.depth_scale = d;
      const double p1 = double(Network::build(s).param_count());
      s.depth_scale = 2 * d;
      const double p2 = double(Network::build(s).param_count());
      const double r = p2 / p1;
      pass = pass && r >= 3.3 && r <= 4.0;
      detail += fmt(" %.3f", r);
    }
  }
  return {pass, detail + "  (ratios param(2d)/param(d) for d = 8, 16, 32; band [3.3, 4.0])"};
}

Outcome compression_strings() {
  const std::string a = compression_ratio(47324929, 28351).text;
  const std::string b = compression_ratio(47324929, 62077).text;
  const std::string c = compression_ratio(12652417, 145657).text;
  return {a == "1669:1" && b == "762:1" && c == "87:1", a + " " + b + " " + c};
}

Outcome distillation_losses() {
  NetworkSpec s;
  s.depth_scale = 4;
  const Network teacher = Network::build(s, false, 11);
  Network copy = teacher.clone();
  const auto z = LatentSampler(12, 100).sample(16);
  double max_grad = 0.0;
  for (const auto& g : mse_gradient(teacher, copy, z))
    for (float v : g) max_grad = std::max(max_grad, double(std::abs(v)));
  Optimizer opt(OptimizerSettings::adam(), copy.parameters());
  const double loss = distill_mse_step(teacher, copy, z, opt).get("mse");

  s.depth_scale = 2;
  Network student = Network::build(s, false, 13);
  NetworkSpec ds = s;
  ds.role = Role::discriminator;
  Network disc = Network::build(ds, false, 14);
  const auto g_mse = mse_gradient(teacher, student, z);
  const auto g_adv = adversarial_gradient(student, disc, z);
  double worst = 0.0;
  for (double alpha : {0.0, 1e-4, 0.5, 1.0}) {
    const auto joint = joint_gradient(teacher, student, disc, z, alpha);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < joint.size(); ++i)
      for (std::size_t j = 0; j < joint[i].size(); ++j) {
        const double want = alpha * g_adv[i][j] + (1 - alpha) * g_mse[i][j];
        num += (joint[i][j] - want) * (joint[i][j] - want);
        den += want * want;
      }
    worst = std::max(worst, std::sqrt(num / den));
  }
  return {loss == 0.0 && max_grad == 0.0 && worst < 1e-6,
          fmt("copied student: loss %g, max |grad| %g; joint vs convex combination: max rel err %.2e", loss, max_grad,
              worst)};
}

Outcome wgan_clip() {
  NetworkSpec gs;
  gs.depth_scale = 2;
  NetworkSpec cs = gs;
  cs.role = Role::discriminator;
  Network gen = Network::build(gs, false, 21);
  Network critic = Network::build(cs, true, 22);
  const Dataset data = synth_shapes(2048, 16, 23);
  TrainConfig cfg = TrainConfig::wgan_defaults();
  cfg.steps = 500;
  cfg.batch_size = 16;
  cfg.seed = 24;
  std::size_t updates = 0, violations = 0;
  double worst = 0.0;
  const float c = float(cfg.clip);
  train_gan(gen, critic, data, cfg, {}, [&](const Network& n) {
    ++updates;
    for (float v : n.flat_weights()) {
      worst = std::max(worst, double(std::abs(v)));
      violations += std::abs(v) > c;
    }
  });
  return {violations == 0 && updates == 500 * cfg.critic_steps,
          fmt("%zu critic updates over 500 generator steps, max |param| %.9g vs c = %.9g, %zu violations", updates,
              worst, double(c), violations)};
}

Outcome persistence() {
  RandomStream rng(2024, 12);
  std::size_t identical = 0, flips = 0, caught = 0;
  const fs::path dir = fs::temp_directory_path() / "distillgan_acceptance_ckpt";
  fs::create_directories(dir);
  for (int t = 0; t < 20; ++t) {
    NetworkSpec s;
    s.role = static_cast<Role>(t % 3);
    s.image_size = rng.below(2) ? 16 : 8;
    s.depth_scale = 1 + rng.below(4);
    s.latent_dim = 8 + rng.below(100);
    s.num_classes = s.role == Role::classifier ? 2 + rng.below(9) : 0;
    const bool critic = s.role == Role::discriminator && rng.below(2);
    Network net = Network::build(s, critic, 100 + t);
    if (s.role != Role::generator) {
      const auto x = LatentSampler(t, s.image_size * s.image_size).sample(4);
      net.forward(nullptr, make_tensor<float>({4, 1, s.image_size, s.image_size}, x->data), ops::NormMode::train);
    } else {
      net.forward(nullptr, LatentSampler(t, s.latent_dim).sample(4), ops::NormMode::train);
    }
    const fs::path p = dir / ("net" + std::to_string(t) + ".dgck");
    save_checkpoint(net, p);
    const Network back = load_checkpoint(p);
    const auto bytes = serialize_checkpoint(net);
    identical += back.spec() == net.spec() && back.critic_mode() == net.critic_mode() &&
                 back.flat_weights() == net.flat_weights() && back.flat_buffers() == net.flat_buffers() &&
                 serialize_checkpoint(back) == bytes;
    // Every byte position, with a random nonzero xor mask.
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      auto bad = bytes;
      bad[i] ^= std::uint8_t(1 + rng.below(255));
      ++flips;
      try {
        deserialize_checkpoint(bad);
      } catch (const ParseError&) {
        ++caught;
      }
    }
  }
  fs::remove_all(dir);
  return {identical == 20 && caught == flips,
          fmt("%zu/20 round trips bit-identical, %zu/%zu corrupted checkpoints rejected", identical, caught, flips)};
}

// Criterion 10 setup: 16x16 synthetic shapes, teacher d = 16, students and
// control d = 2, 3000 steps each, 5 seeds.
ExperimentConfig central_config(const fs::path& out, std::size_t threads) {
  ExperimentConfig c;
  c.data.kind = "synth_shapes";
  c.data.image_size = 16;
  c.teacher.grid = {16};
  c.teacher.steps = 3000;
  c.student.d = {2};
  c.student.losses = {LossKind::distill_mse, LossKind::distill_joint};
  c.student.alpha = 1e-4;
  c.student.control = true;
  c.student.steps = 3000;
  c.seeds = {0, 1, 2, 3, 4};
  c.out = out;
  c.threads = threads;
  return c;
}

struct PipelineRun {
  ExperimentConfig config;
  EvaluationReport report;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const ExperimentConfig& c) {
  fs::remove_all(c.out);
  const auto t0 = Clock::now();
  cmd_train_classifier(c);
  cmd_train_teacher(c);
  cmd_distill(c);
  PipelineRun r{c, cmd_evaluate(c), 0.0};
  r.seconds = seconds_since(t0);
  return r;
}

const MetricsReport& row(const PipelineRun& run, const std::string& id) {
  for (const auto& r : run.report.rows)
    if (r.model_id == id) return r;
  throw ContractError("no report row " + id);
}

Outcome central_claim(const PipelineRun& run) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed : run.config.seeds) {
    const double s = *row(run, student_id(LossKind::distill_mse, 2, seed)).fid;
    const double c = *row(run, control_id(2, seed)).fid;
    wins += s < c;
    detail += fmt(" s%llu %.3f/%.3f", static_cast<unsigned long long>(seed), s, c);
  }
  const bool fast = run.seconds < 15 * 60;
  return {wins >= 4 && fast, fmt("student beats control in %zu/5 seeds (FID* student/control:%s), teacher FID* %.3f, "
                                 "pipeline %.0f s on %zu thread(s)",
                                 wins, detail.c_str(), *row(run, "teacher").fid, run.seconds, run.config.threads)};
}

Outcome sharpness(const PipelineRun& run) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed : run.config.seeds) {
    const double j = *row(run, student_id(LossKind::distill_joint, 2, seed)).vol_ratio;
    const double m = *row(run, student_id(LossKind::distill_mse, 2, seed)).vol_ratio;
    wins += j >= m;
    detail += fmt(" s%llu %.4f/%.4f", static_cast<unsigned long long>(seed), j, m);
  }
  return {wins >= 3, fmt("joint VoL ratio >= MSE VoL ratio in %zu/5 seeds (joint/mse:%s)", wins, detail.c_str())};
}

Outcome interpolation_endpoints(const PipelineRun& run) {
  const ExperimentConfig& c = run.config;
  const fs::path student_ckpt = c.out / "students" / (student_id(LossKind::distill_mse, 2, 0) + ".ckpt");
  const std::size_t k = 8;
  const Interpolation r = cmd_interpolate(c.teacher_path(), student_ckpt, k, 7, c.out);
  const Network teacher = load_checkpoint(c.teacher_path());
  const Network student = load_checkpoint(student_ckpt);
  const auto ends = LatentSampler(7, 100).sample(2);
  const auto z0 = make_tensor<float>({1, 100}, std::vector<float>(ends->data.begin(), ends->data.begin() + 100));
  const auto z1 = make_tensor<float>({1, 100}, std::vector<float>(ends->data.begin() + 100, ends->data.end()));
  const std::size_t per = r.teacher_row->numel() / k;
  auto column = [&](const TensorPtr<float>& t, std::size_t j) {
    return std::vector<float>(t->data.begin() + std::ptrdiff_t(j * per), t->data.begin() + std::ptrdiff_t((j + 1) * per));
  };
  const bool same = column(r.teacher_row, 0) == generate(teacher, z0)->data &&
                    column(r.teacher_row, k - 1) == generate(teacher, z1)->data &&
                    column(r.student_row, 0) == generate(student, z0)->data &&
                    column(r.student_row, k - 1) == generate(student, z1)->data;
  const double ends_max = std::max(r.column_mse.front(), r.column_mse.back());
  const double path_max = *std::max_element(r.column_mse.begin(), r.column_mse.end());
  return {same, fmt("t = 0 and t = 1 columns %s direct generation; column MSE max %.4f vs endpoint max %.4f",
                    same ? "bit-identical to" : "DIFFER from", path_max, ends_max)};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  std::size_t files = 0, equal = 0;
  std::string differing;
  for (const auto& e : fs::recursive_directory_iterator(a.config.out)) {
    const std::string name = e.path().filename().string();
    if (!e.is_regular_file() || name.size() < 9 || name.substr(name.size() - 9) != "_loss.csv") continue;
    ++files;
    const fs::path other = b.config.out / fs::relative(e.path(), a.config.out);
    if (fs::exists(other) && slurp(e.path()) == slurp(other)) {
      ++equal;
    } else {
      differing += " " + name;
    }
  }
  const bool metrics_equal = a.report.metrics_csv == b.report.metrics_csv;
  return {files > 0 && equal == files,
          fmt("%zu/%zu loss CSVs byte-identical across runs with %zu and %zu threads; metrics.csv %s%s", equal, files,
              a.config.threads, b.config.threads, metrics_equal ? "identical" : "differs", differing.c_str())};
}

std::size_t default_threads() {
  if (const char* v = std::getenv("DISTILLGAN_THREADS")) {
    const long n = std::strtol(v, nullptr, 10);
    if (n > 0) return std::size_t(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  const char* names[] = {"",
                         "gradient suite",
                         "FID oracle",
                         "matrix square root",
                         "inception score analytic cases",
                         "variance of Laplacian",
                         "parameter scaling law",
                         "compression ratio strings",
                         "distillation losses",
                         "WGAN clip invariant",
                         "student beats control (FID*)",
                         "joint vs MSE sharpness",
                         "persistence",
                         "interpolation endpoints",
                         "determinism"};
  int failures = 0;
  auto report = [&](int n, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %2d  %-32s %s\n", o.pass ? "PASS" : "FAIL", n, names[n], o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, gradient_suite);
  report(2, fid_oracle);
  report(3, matrix_sqrt);
  report(4, inception_cases);
  report(5, vol_cases);
  report(6, scaling_law);
  report(7, compression_strings);
  report(8, distillation_losses);
  report(9, wgan_clip);

  const char* base_env = std::getenv("DISTILLGAN_ACCEPTANCE_OUT");
  const fs::path base = base_env ? fs::path(base_env) : fs::temp_directory_path() / "distillgan_acceptance";
  const std::size_t threads = default_threads();
  std::optional<PipelineRun> first, second;
  std::string pipeline_error;
  if (wanted(10) || wanted(11) || wanted(13) || wanted(14)) {
    try {
      first = run_pipeline(central_config(base / "run_a", threads));
    } catch (const std::exception& e) {
      pipeline_error = e.what();
    }
  }
  auto needs_first = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!first) return {false, "pipeline failed: " + pipeline_error};
      return fn(*first);
    };
  };
  report(10, needs_first(central_claim));
  report(11, needs_first(sharpness));
  report(12, persistence);
  report(13, needs_first(interpolation_endpoints));
  report(14, [&]() -> Outcome {
    if (!first) return {false, "pipeline failed: " + pipeline_error};
    // Replay with a different thread count; cells are independent single-owner runs.
    second = run_pipeline(central_config(base / "run_b", threads == 1 ? 2 : 1));
    return determinism(*first, *second);
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
