#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distillgan/error.hpp"
#include "distillgan/experiment.hpp"

using namespace distillgan;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Overrides {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> d;
  std::string loss;
  std::optional<double> alpha;
  std::optional<std::size_t> steps;
  std::string metric;
  // interpolate
  std::string teacher;
  std::string student;
  std::optional<std::size_t> k;
};

std::size_t threads_from_env() {
  const char* v = std::getenv("DISTILLGAN_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n <= 0) throw ConfigError(std::string("DISTILLGAN_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

ExperimentConfig resolve(const Overrides& o, const std::string& command) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.out.empty()) c.out = o.out;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.d.empty()) (command == "train-teacher" ? c.teacher.grid : c.student.d) = o.d;
  if (!o.loss.empty()) {
    const LossKind l = loss_kind_from_string(o.loss);
    if (l == LossKind::gan || l == LossKind::wgan) {
      c.teacher.loss = l;
    } else {
      c.student.losses = {l};
    }
  }
  if (o.alpha) c.student.alpha = *o.alpha;
  if (o.steps) {
    if (command == "train-classifier") c.classifier.steps = *o.steps;
    else if (command == "train-teacher") c.teacher.steps = *o.steps;
    else if (command == "run") c.classifier.steps = c.teacher.steps = c.student.steps = *o.steps;
    else c.student.steps = *o.steps;
  }
  if (!o.metric.empty()) c.teacher.metric = selection_metric_from_string(o.metric);
  if (o.k) c.interpolation_steps = *o.k;
  c.threads = threads_from_env();
  c.validate();
  return c;
}

void print_selection(const TeacherSelection& sel) {
  for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
    const auto& c = sel.candidates[i];
    if (c.evaluation) {
      std::printf("teacher d=%zu seed=%llu  IS*=%.4f FID*=%.4f VoL=%.4f%s\n", c.d,
                  static_cast<unsigned long long>(c.seed), c.evaluation->is.mean, c.evaluation->fid,
                  c.evaluation->vol, i == sel.best ? "  <- selected" : "");
    } else {
      std::printf("teacher d=%zu seed=%llu  failed: %s\n", c.d, static_cast<unsigned long long>(c.seed),
                  c.failure.c_str());
    }
  }
}

int run(const std::string& command, const Overrides& o) {
  const ExperimentConfig c = resolve(o, command);
  if (command == "config") {
    std::cout << config_to_json(c);
  } else if (command == "train-classifier") {
    const auto r = cmd_train_classifier(c);
    std::printf("classifier saved to %s, holdout accuracy %.4f\n", c.classifier_path().c_str(), r.holdout_accuracy);
  } else if (command == "train-teacher") {
    print_selection(cmd_train_teacher(c));
    std::printf("teacher saved to %s\n", c.teacher_path().c_str());
  } else if (command == "distill") {
    for (const auto& cell : cmd_distill(c)) {
      const auto& rows = cell.log.rows();
      std::printf("%-24s %s  final %s=%.6f\n", cell.id.c_str(), cell.checkpoint.c_str(),
                  rows.back().losses.front().first.c_str(), rows.back().losses.front().second);
    }
  } else if (command == "evaluate") {
    const auto report = cmd_evaluate(c);
    std::cout << report.metrics_csv << '\n' << report.vol_ratio_csv;
  } else if (command == "interpolate") {
    const fs::path teacher = o.teacher.empty() ? c.teacher_path() : fs::path(o.teacher);
    const fs::path student = o.student.empty()
                                 ? c.out / "students" /
                                       (student_id(c.student.losses.empty() ? LossKind::distill_mse
                                                                            : c.student.losses.front(),
                                                   c.student.d.front(), c.seeds.front()) + ".ckpt")
                                 : fs::path(o.student);
    const auto r = cmd_interpolate(teacher, student, c.interpolation_steps, c.seeds.front(), c.out);
    for (std::size_t j = 0; j < r.t.size(); ++j) std::printf("t=%.4f mse=%.6f\n", r.t[j], r.column_mse[j]);
    std::printf("grid written to %s\n", (c.out / "interpolate.png").c_str());
  } else if (command == "run") {
    std::printf("classifier holdout accuracy %.4f\n", cmd_train_classifier(c).holdout_accuracy);
    print_selection(cmd_train_teacher(c));
    cmd_distill(c);
    std::cout << cmd_evaluate(c).metrics_csv;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-student distillation of small GAN generators"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "JSON experiment config");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--seed", o.seeds, "Seed list")->delimiter(',');
  app.add_option("--d", o.d, "Depth scales: teacher grid for train-teacher, student sizes otherwise")->delimiter(',');
  app.add_option("--loss", o.loss, "gan, wgan (teacher and control) or mse, joint (students)")
      ->check(CLI::IsMember({"gan", "wgan", "mse", "joint"}));
  app.add_option("--alpha", o.alpha, "Adversarial weight of the joint loss")->check(CLI::Range(0.0, 1.0));
  app.add_option("--steps", o.steps, "Step budget of the subcommand's training runs");
  app.add_option("--metric", o.metric, "Teacher selection metric")->check(CLI::IsMember({"is", "fid"}));

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"config", "Print the resolved config as JSON"},
      {"train-classifier", "Train the scoring classifier"},
      {"train-teacher", "Train teacher candidates over the d grid and select the best"},
      {"distill", "Train students (and controls) against the selected teacher"},
      {"evaluate", "Write metrics.csv and vol_ratio.csv"},
      {"interpolate", "Render teacher and student along a latent interpolation path"},
      {"run", "train-classifier, train-teacher, distill and evaluate in sequence"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "interpolate") {
      sub->add_option("--teacher", o.teacher, "Teacher checkpoint");
      sub->add_option("--student", o.student, "Student checkpoint");
      sub->add_option("--k", o.k, "Number of columns")->check(CLI::PositiveNumber);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
}
