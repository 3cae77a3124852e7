#include "distillgan/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "distillgan/checkpoint.hpp"
#include "distillgan/error.hpp"
#include "distillgan/image_io.hpp"
#include "distillgan/random.hpp"

namespace distillgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string is_mode_name(IsMode m) { return m == IsMode::exp_kl ? "exp_kl" : "cross_entropy"; }

IsMode is_mode_from_string(const std::string& s) {
  if (s == "exp_kl") return IsMode::exp_kl;
  if (s == "cross_entropy") return IsMode::cross_entropy;
  throw ConfigError("unknown is_mode '" + s + "' (expected exp_kl or cross_entropy)");
}

// Reads the keys of one JSON object and rejects any it did not ask for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + where_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_optimizer(const json& j, const std::string& where, OptimizerSettings& o) {
  ObjectReader r(j, where);
  std::string kind = to_string(o.kind);
  r.get("kind", kind);
  o.kind = optimizer_kind_from_string(kind);
  r.get("lr", o.learning_rate);
  r.get("beta1", o.beta1);
  r.get("beta2", o.beta2);
  r.get("rms_decay", o.rms_decay);
  r.get("eps", o.eps);
  r.finish();
}

// Shortest decimal that reads back as the same float, so 0.9f prints as 0.9.
double tidy(float v) {
  char buf[32];
  for (int digits = 6; digits < 10; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, double(v));
    if (std::strtof(buf, nullptr) == v) break;
  }
  return std::strtod(buf, nullptr);
}

json optimizer_json(const OptimizerSettings& o) {
  return {{"kind", to_string(o.kind)}, {"lr", tidy(o.learning_rate)}, {"beta1", tidy(o.beta1)},
          {"beta2", tidy(o.beta2)},    {"rms_decay", tidy(o.rms_decay)}, {"eps", tidy(o.eps)}};
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& path, const std::string& what, const std::string& hint) {
  if (!fs::exists(path)) throw ConfigError(what + " " + path.string() + " not found; " + hint);
}

NetworkSpec generator_spec(const ExperimentConfig& c, const Dataset& data, std::size_t d) {
  NetworkSpec s;
  s.role = Role::generator;
  s.image_size = data.height;
  s.image_channels = data.channels;
  s.depth_scale = d;
  s.latent_dim = c.latent_dim;
  return s;
}

TrainConfig gan_config(const ExperimentConfig& c, LossKind loss, std::size_t steps, std::uint64_t seed) {
  TrainConfig t = loss == LossKind::wgan ? TrainConfig::wgan_defaults() : TrainConfig{};
  t.loss_kind = loss;
  if (loss == LossKind::gan) {
    t.gen_optimizer = c.gan_optimizer;
    t.disc_optimizer = c.gan_optimizer;
  }
  t.steps = steps;
  t.batch_size = c.batch_size;
  t.seed = seed;
  return t;
}

void write_run(const fs::path& dir, const std::string& id, const RunLog& log) {
  write_text(dir / (id + "_loss.csv"), log.loss_csv());
  write_text(dir / (id + "_timing.csv"), log.timing_csv());
}

Network load_role(const fs::path& path, Role role) {
  Network net = load_checkpoint(path);
  if (net.role() != role) {
    throw ConfigError(path.string() + " holds a " + to_string(net.role()) + ", expected a " +
                      to_string(role));
  }
  return net;
}

FeatureStats real_stats(const Dataset& holdout, const Network& classifier) {
  return feature_stats(*holdout.slice(0, holdout.size()), classifier);
}

struct CellPlan {
  std::string id;
  std::size_t d;
  std::uint64_t seed;
  LossKind loss;  // distill_mse, distill_joint, or gan/wgan for a control
};

std::vector<CellPlan> plan_cells(const ExperimentConfig& c) {
  std::vector<CellPlan> cells;
  for (std::size_t d : c.student.d)
    for (std::uint64_t seed : c.seeds) {
      for (LossKind loss : c.student.losses) cells.push_back({student_id(loss, d, seed), d, seed, loss});
      if (c.student.control) cells.push_back({control_id(d, seed), d, seed, c.teacher.loss});
    }
  return cells;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(data.kind == "synth_shapes" || data.kind == "idx",
          "data.kind must be synth_shapes or idx, got '" + data.kind + "'");
  if (data.kind == "synth_shapes") {
    require(data.image_size == 8 || data.image_size == 16, "synth_shapes image_size must be 8 or 16");
    require(data.count >= batch_size, "data.count must be at least batch_size");
  } else {
    require(!data.images.empty(), "data.images is required for idx data");
  }
  require(data.holdout >= 2, "data.holdout must be at least 2");
  require(latent_dim > 0, "latent_dim must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(!seeds.empty(), "seeds must be nonempty");
  require(threads > 0, "threads must be positive");
  require(interpolation_steps >= 2, "interpolation_steps must be at least 2");
  require(evaluation.samples >= 2, "evaluation.samples must be at least 2");
  require(evaluation.splits >= 1 && evaluation.splits <= evaluation.samples,
          "evaluation.splits must be in [1, samples]");

  require(classifier.d > 0, "classifier.d must be positive");
  require(classifier.steps > 0 && classifier.batch_size > 0, "classifier steps and batch_size must be positive");
  require(!teacher.grid.empty(), "teacher.grid must be nonempty");
  for (std::size_t d : teacher.grid) require(d > 0, "teacher.grid values must be positive");
  require(teacher.steps > 0, "teacher.steps must be positive");
  require(teacher.loss == LossKind::gan || teacher.loss == LossKind::wgan, "teacher.loss must be gan or wgan");
  require(!student.d.empty(), "student.d must be nonempty");
  for (std::size_t d : student.d) require(d > 0, "student.d values must be positive");
  require(student.steps > 0, "student.steps must be positive");
  require(!student.losses.empty() || student.control, "student.losses is empty and control is off");
  for (LossKind l : student.losses) {
    require(l == LossKind::distill_mse || l == LossKind::distill_joint, "student.losses must be mse or joint");
    if (l == LossKind::distill_joint) {
      require(student.alpha.has_value(), "joint loss needs student.alpha");
      require(*student.alpha >= 0.0 && *student.alpha <= 1.0, "student.alpha must lie in [0, 1]");
    }
  }
  try {
    gan_optimizer.validate();
    distill_optimizer.validate();
    classifier.optimizer.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  // Image geometry is only known for synthetic data before loading.
  if (data.kind == "synth_shapes") {
    NetworkSpec s;
    s.image_size = data.image_size;
    s.latent_dim = latent_dim;
    for (auto ds : {&teacher.grid, &student.d})
      for (std::size_t d : *ds) {
        s.depth_scale = d;
        s.validate();
      }
  }
}

fs::path ExperimentConfig::teacher_path() const {
  return teacher.checkpoint ? *teacher.checkpoint : out / "teacher.ckpt";
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  ObjectReader root(j, "config");
  if (const json* d = root.child("data")) {
    ObjectReader r(*d, "data");
    std::string images, labels;
    r.get("kind", c.data.kind);
    r.get("image_size", c.data.image_size);
    r.get("count", c.data.count);
    r.get("holdout", c.data.holdout);
    r.get("seed", c.data.seed);
    r.get("images", images);
    r.get("labels", labels);
    c.data.images = images;
    c.data.labels = labels;
    r.finish();
  }
  if (const json* d = root.child("classifier")) {
    ObjectReader r(*d, "classifier");
    r.get("d", c.classifier.d);
    r.get("steps", c.classifier.steps);
    r.get("batch_size", c.classifier.batch_size);
    if (const json* o = r.child("optimizer")) read_optimizer(*o, "classifier.optimizer", c.classifier.optimizer);
    r.finish();
  }
  if (const json* d = root.child("teacher")) {
    ObjectReader r(*d, "teacher");
    std::string loss = to_string(c.teacher.loss), metric = to_string(c.teacher.metric), ckpt;
    r.get("grid", c.teacher.grid);
    r.get("disc_d", c.teacher.disc_d);
    r.get("steps", c.teacher.steps);
    r.get("loss", loss);
    r.get("metric", metric);
    r.get("checkpoint", ckpt);
    c.teacher.loss = loss_kind_from_string(loss);
    c.teacher.metric = selection_metric_from_string(metric);
    if (!ckpt.empty()) c.teacher.checkpoint = ckpt;
    r.finish();
  }
  if (const json* d = root.child("student")) {
    ObjectReader r(*d, "student");
    std::vector<std::string> losses;
    for (LossKind l : c.student.losses) losses.push_back(to_string(l));
    std::optional<double> alpha;
    r.get("d", c.student.d);
    r.get("losses", losses);
    if (const json* a = r.child("alpha"); a && !a->is_null()) {
      if (!a->is_number()) throw ConfigError("student.alpha has the wrong type");
      c.student.alpha = a->get<double>();
    }
    r.get("control", c.student.control);
    r.get("steps", c.student.steps);
    c.student.losses.clear();
    for (const auto& l : losses) c.student.losses.push_back(loss_kind_from_string(l));
    r.finish();
  }
  root.get("latent_dim", c.latent_dim);
  root.get("batch_size", c.batch_size);
  if (const json* o = root.child("gan_optimizer")) read_optimizer(*o, "gan_optimizer", c.gan_optimizer);
  if (const json* o = root.child("distill_optimizer")) read_optimizer(*o, "distill_optimizer", c.distill_optimizer);
  root.get("seeds", c.seeds);
  if (const json* d = root.child("evaluation")) {
    ObjectReader r(*d, "evaluation");
    std::string mode = is_mode_name(c.evaluation.is_mode);
    r.get("samples", c.evaluation.samples);
    r.get("splits", c.evaluation.splits);
    r.get("seed", c.evaluation.seed);
    r.get("is_mode", mode);
    c.evaluation.is_mode = is_mode_from_string(mode);
    r.finish();
  }
  root.get("interpolation_steps", c.interpolation_steps);
  std::string out = c.out.string();
  root.get("out", out);
  c.out = out;
  root.get("threads", c.threads);
  root.finish();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  std::vector<std::string> losses;
  for (LossKind l : c.student.losses) losses.push_back(to_string(l));
  json teacher = {{"grid", c.teacher.grid},
                  {"disc_d", c.teacher.disc_d},
                  {"steps", c.teacher.steps},
                  {"loss", to_string(c.teacher.loss)},
                  {"metric", to_string(c.teacher.metric)}};
  if (c.teacher.checkpoint) teacher["checkpoint"] = c.teacher.checkpoint->string();
  json j = {
      {"data",
       {{"kind", c.data.kind},
        {"image_size", c.data.image_size},
        {"count", c.data.count},
        {"holdout", c.data.holdout},
        {"seed", c.data.seed},
        {"images", c.data.images.string()},
        {"labels", c.data.labels.string()}}},
      {"classifier",
       {{"d", c.classifier.d},
        {"steps", c.classifier.steps},
        {"batch_size", c.classifier.batch_size},
        {"optimizer", optimizer_json(c.classifier.optimizer)}}},
      {"teacher", teacher},
      {"student",
       {{"d", c.student.d},
        {"losses", losses},
        {"alpha", c.student.alpha ? json(*c.student.alpha) : json(nullptr)},
        {"control", c.student.control},
        {"steps", c.student.steps}}},
      {"latent_dim", c.latent_dim},
      {"batch_size", c.batch_size},
      {"gan_optimizer", optimizer_json(c.gan_optimizer)},
      {"distill_optimizer", optimizer_json(c.distill_optimizer)},
      {"seeds", c.seeds},
      {"evaluation",
       {{"samples", c.evaluation.samples},
        {"splits", c.evaluation.splits},
        {"seed", c.evaluation.seed},
        {"is_mode", is_mode_name(c.evaluation.is_mode)}}},
      {"interpolation_steps", c.interpolation_steps},
      {"out", c.out.string()},
      {"threads", c.threads},
  };
  return j.dump(2) + "\n";
}

ExperimentData load_experiment_data(const DataConfig& c) {
  if (c.kind == "synth_shapes") {
    return {synth_shapes(c.count, c.image_size, c.seed),
            synth_shapes(c.holdout, c.image_size, mix_seed(c.seed, 1))};
  }
  Dataset all = c.labels.empty() ? load_idx(c.images, c.image_size) : load_idx(c.images, c.labels, c.image_size);
  if (all.size() <= c.holdout) {
    throw ConfigError("dataset has " + std::to_string(all.size()) + " images, holdout needs more than " +
                      std::to_string(c.holdout));
  }
  auto [train, holdout] = all.split(all.size() - c.holdout);
  return {std::move(train), std::move(holdout)};
}

std::string student_id(LossKind loss, std::size_t d, std::uint64_t seed) {
  const std::string kind = loss == LossKind::distill_joint ? "joint" : "mse";
  return kind + "_d" + std::to_string(d) + "_s" + std::to_string(seed);
}

std::string control_id(std::size_t d, std::uint64_t seed) {
  return "control_d" + std::to_string(d) + "_s" + std::to_string(seed);
}

std::uint64_t student_init_seed(std::uint64_t seed, std::size_t d) { return mix_seed(mix_seed(seed, 20), d); }
std::uint64_t student_disc_seed(std::uint64_t seed, std::size_t d) { return mix_seed(mix_seed(seed, 21), d); }

ClassifierResult cmd_train_classifier(const ExperimentConfig& c) {
  c.validate();
  const ExperimentData data = load_experiment_data(c.data);
  if (data.train.labels.empty()) throw ConfigError("classifier training needs a labeled dataset");
  NetworkSpec s = generator_spec(c, data.train, c.classifier.d);
  s.role = Role::classifier;
  s.num_classes = data.train.num_classes;
  Network cls = Network::build(s, false, mix_seed(c.seeds.front(), 30));
  TrainConfig t;
  t.steps = c.classifier.steps;
  t.batch_size = c.classifier.batch_size;
  t.gen_optimizer = c.classifier.optimizer;
  t.seed = c.seeds.front();
  const RunLog log = train_classifier(cls, data.train, t);

  make_dirs(c.out);
  save_checkpoint(cls, c.classifier_path());
  write_run(c.out, "classifier", log);
  ClassifierResult r;
  if (!data.holdout.labels.empty()) r.holdout_accuracy = classifier_accuracy(cls, data.holdout);
  return r;
}

TeacherSelection cmd_train_teacher(const ExperimentConfig& c) {
  c.validate();
  require_file(c.classifier_path(), "classifier checkpoint", "run train-classifier first");
  const ExperimentData data = load_experiment_data(c.data);
  if (c.teacher.metric == SelectionMetric::is && data.train.labels.empty()) {
    throw ConfigError("metric 'is' needs a labeled dataset to train the scoring classifier");
  }
  const Network cls = load_role(c.classifier_path(), Role::classifier);
  const FeatureStats real = real_stats(data.holdout, cls);

  SelectionSetup setup;
  setup.generator_spec = generator_spec(c, data.train, c.teacher.grid.front());
  setup.disc_depth_scale = c.teacher.disc_d;
  setup.config = gan_config(c, c.teacher.loss, c.teacher.steps, c.seeds.front());
  setup.metric = c.teacher.metric;
  setup.evaluation = c.evaluation;
  setup.threads = c.threads;
  TeacherSelection sel = select_teacher(c.teacher.grid, data.train, cls, real, setup);

  const fs::path dir = c.out / "teacher";
  make_dirs(dir);
  std::ostringstream csv;
  csv << "d,seed,params,is_mean,is_std,fid,vol,status,selected\n";
  for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
    const TeacherCandidate& cand = sel.candidates[i];
    const std::string id = "d" + std::to_string(cand.d);
    csv << cand.d << ',' << cand.seed << ',';
    if (cand.generator && cand.evaluation) {
      save_checkpoint(*cand.generator, dir / (id + ".ckpt"));
      write_run(dir, id, cand.log);
      export_grid(*sample_images(*cand.generator, 64, c.evaluation.seed), 8, dir / (id + "_samples.png"));
      const auto& e = *cand.evaluation;
      csv << cand.generator->param_count() << ',' << format_number(e.is.mean) << ','
          << format_number(e.is.std) << ',' << format_number(e.fid) << ',' << format_number(e.vol)
          << ",ok,";
    } else {
      write_text(dir / (id + "_failure.txt"), cand.failure + "\n");
      csv << ",,,,,failed,";
    }
    csv << (i == sel.best ? 1 : 0) << '\n';
  }
  write_text(dir / "selection.csv", csv.str());
  const fs::path best = c.teacher_path();
  if (best.has_parent_path()) make_dirs(best.parent_path());
  save_checkpoint(*sel.candidates[sel.best].generator, best);
  return sel;
}

std::vector<DistillCell> cmd_distill(const ExperimentConfig& c) {
  c.validate();
  require_file(c.teacher_path(), "teacher checkpoint", "run train-teacher first");
  const Network teacher = load_role(c.teacher_path(), Role::generator);
  if (teacher.spec().latent_dim != c.latent_dim) {
    throw ConfigError("teacher latent_dim " + std::to_string(teacher.spec().latent_dim) +
                      " differs from config latent_dim " + std::to_string(c.latent_dim));
  }
  const auto cells = plan_cells(c);
  const bool needs_data = c.student.control ||
      std::count(c.student.losses.begin(), c.student.losses.end(), LossKind::distill_joint) > 0;
  std::optional<ExperimentData> data;
  if (needs_data) {
    data = load_experiment_data(c.data);
    const Dataset& d = data->train;
    if (d.height != teacher.spec().image_size || d.channels != teacher.spec().image_channels) {
      throw ConfigError("dataset images are " + std::to_string(d.channels) + "x" + std::to_string(d.height) +
                        "x" + std::to_string(d.width) + " but the teacher generates " +
                        std::to_string(teacher.spec().image_channels) + "x" +
                        std::to_string(teacher.spec().image_size) + "x" +
                        std::to_string(teacher.spec().image_size));
    }
  }
  for (const auto& cell : cells) {
    NetworkSpec s = teacher.spec();
    s.depth_scale = cell.d;
    s.validate();
  }

  const fs::path dir = c.out / "students";
  make_dirs(dir);
  std::vector<DistillCell> out(cells.size());
  parallel_for(cells.size(), c.threads, [&](std::size_t i) {
    const CellPlan& cell = cells[i];
    NetworkSpec gs = teacher.spec();
    gs.depth_scale = cell.d;
    NetworkSpec ds = gs;
    ds.role = Role::discriminator;
    Network gen = Network::build(gs, false, student_init_seed(cell.seed, cell.d));
    const bool control = cell.loss == LossKind::gan || cell.loss == LossKind::wgan;
    Network disc = Network::build(ds, cell.loss == LossKind::wgan, student_disc_seed(cell.seed, cell.d));
    RunLog log;
    if (control) {
      log = train_gan(gen, disc, data->train, gan_config(c, cell.loss, c.student.steps, cell.seed));
    } else {
      TrainConfig t;
      t.loss_kind = cell.loss;
      if (cell.loss == LossKind::distill_joint) t.alpha = c.student.alpha;
      t.steps = c.student.steps;
      t.batch_size = c.batch_size;
      t.gen_optimizer = c.distill_optimizer;
      t.disc_optimizer = c.gan_optimizer;
      t.seed = cell.seed;
      const bool joint = cell.loss == LossKind::distill_joint;
      log = train_distill(teacher, gen, joint ? &disc : nullptr, joint ? &data->train : nullptr, t);
    }
    out[i].id = cell.id;
    out[i].checkpoint = dir / (cell.id + ".ckpt");
    save_checkpoint(gen, out[i].checkpoint);
    write_run(dir, cell.id, log);
    out[i].log = std::move(log);
  });
  return out;
}

EvaluationReport cmd_evaluate(const ExperimentConfig& c) {
  c.validate();
  require_file(c.classifier_path(), "classifier checkpoint", "run train-classifier first");
  require_file(c.teacher_path(), "teacher checkpoint", "run train-teacher first");
  const auto cells = plan_cells(c);
  const fs::path dir = c.out / "students";
  for (const auto& cell : cells) require_file(dir / (cell.id + ".ckpt"), "student checkpoint", "run distill first");

  const Network cls = load_role(c.classifier_path(), Role::classifier);
  const Network teacher = load_role(c.teacher_path(), Role::generator);
  const ExperimentData data = load_experiment_data(c.data);
  const FeatureStats real = real_stats(data.holdout, cls);

  std::vector<std::pair<std::string, fs::path>> models = {{"teacher", c.teacher_path()}};
  for (const auto& cell : cells) models.emplace_back(cell.id, dir / (cell.id + ".ckpt"));
  std::vector<MetricsReport> rows(models.size());
  parallel_for(models.size(), c.threads, [&](std::size_t i) {
    const Network gen = i == 0 ? teacher.clone() : load_role(models[i].second, Role::generator);
    const GeneratorEvaluation e = evaluate_generator(gen, cls, real, c.evaluation);
    MetricsReport& r = rows[i];
    r.model_id = models[i].first;
    r.d = gen.spec().depth_scale;
    r.params = gen.param_count();
    r.is_mean = e.is.mean;
    r.is_std = e.is.std;
    r.fid = e.fid;
    r.vol = e.vol;
    r.ratio = compression_ratio(teacher.param_count(), r.params).text;
  });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[0].vol > 0.0) rows[i].vol_ratio = rows[i].vol / rows[0].vol;
  }

  EvaluationReport report;
  report.rows = rows;
  report.metrics_csv = metrics_csv(rows);
  report.vol_ratio_csv = vol_ratio_csv(rows, "teacher");
  make_dirs(c.out);
  write_text(c.out / "metrics.csv", report.metrics_csv);
  write_text(c.out / "vol_ratio.csv", report.vol_ratio_csv);
  return report;
}

Interpolation interpolate(const Network& teacher, const Network& student, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("interpolation needs at least 2 steps");
  if (teacher.role() != Role::generator || student.role() != Role::generator) {
    throw ConfigError("interpolation needs two generators");
  }
  const std::size_t n = teacher.spec().latent_dim;
  if (student.spec().latent_dim != n) {
    throw ConfigError("latent_dim mismatch: teacher " + std::to_string(n) + ", student " +
                      std::to_string(student.spec().latent_dim));
  }
  const auto ends = LatentSampler(seed, n).sample(2);
  Interpolation r;
  r.z = zeros<float>({k, n});
  for (std::size_t j = 0; j < k; ++j) {
    const double t = j + 1 == k ? 1.0 : double(j) / double(k - 1);
    r.t.push_back(t);
    for (std::size_t i = 0; i < n; ++i) {
      r.z->data[j * n + i] = float((1.0 - t) * ends->data[i] + t * ends->data[n + i]);
    }
  }
  r.teacher_row = generate(teacher, r.z);
  r.student_row = generate(student, r.z);
  if (r.teacher_row->shape != r.student_row->shape) throw ConfigError("teacher and student image shapes differ");
  const std::size_t per = r.teacher_row->numel() / k;
  for (std::size_t j = 0; j < k; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double e = double(r.teacher_row->data[j * per + i]) - r.student_row->data[j * per + i];
      acc += e * e;
    }
    r.column_mse.push_back(acc / double(per));
  }
  return r;
}

Interpolation cmd_interpolate(const fs::path& teacher_ckpt, const fs::path& student_ckpt, std::size_t k,
                              std::uint64_t seed, const fs::path& out_dir) {
  require_file(teacher_ckpt, "teacher checkpoint", "run train-teacher first");
  require_file(student_ckpt, "student checkpoint", "run distill first");
  const Network teacher = load_role(teacher_ckpt, Role::generator);
  const Network student = load_role(student_ckpt, Role::generator);
  Interpolation r = interpolate(teacher, student, k, seed);

  Shape grid_shape = r.teacher_row->shape;
  grid_shape[0] = 2 * k;
  Tensor<float> grid(grid_shape, std::vector<float>(shape_numel(grid_shape)));
  std::copy(r.teacher_row->data.begin(), r.teacher_row->data.end(), grid.data.begin());
  std::copy(r.student_row->data.begin(), r.student_row->data.end(),
            grid.data.begin() + static_cast<std::ptrdiff_t>(r.teacher_row->numel()));
  make_dirs(out_dir);
  export_grid(grid, k, out_dir / "interpolate.png");
  std::ostringstream csv;
  csv << "t,mse\n";
  for (std::size_t j = 0; j < k; ++j) csv << format_number(r.t[j]) << ',' << format_number(r.column_mse[j]) << '\n';
  write_text(out_dir / "interpolate.csv", csv.str());
  return r;
}

}  // namespace distillgan
