#include "tscs/experiments.hpp"

#include "tscs/image.hpp"
#include "tscs/metrics.hpp"
#include "tscs/operator_io.hpp"
#include "tscs/parallel.hpp"
#include "tscs/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <json.hpp>
#include <set>

namespace tscs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char *kCheckpointFormat = "tscs-checkpoint";

std::size_t thread_count(const ExperimentSpec &spec) {
  return spec.threads ? spec.threads : default_thread_count();
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void ensure_parent(const fs::path &file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

template <typename T> T get_field(const json &doc, const char *key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception &e) {
    throw SpecError(fmt::format("spec field '{}': {}", key, e.what()));
  }
}

ExperimentKind parse_kind(const std::string &s) {
  if (s == "coherence") return ExperimentKind::coherence;
  if (s == "recovery") return ExperimentKind::recovery;
  if (s == "sense") return ExperimentKind::sense;
  if (s == "train") return ExperimentKind::train;
  if (s == "eval") return ExperimentKind::eval;
  throw SpecError(fmt::format("unknown experiment kind '{}'", s));
}

SourceSpec parse_source(const json &j) {
  SourceSpec s;
  const auto kind = get_field<std::string>(j, "kind");
  if (kind == "unconstrained") {
    s.kind = MatrixSource::Kind::unconstrained;
    s.branches = 0;
  } else if (kind == "tensor_sum") {
    s.kind = MatrixSource::Kind::tensor_sum;
    s.branches = get_field<std::size_t>(j, "T");
  } else if (kind == "structured") {
    s.kind = MatrixSource::Kind::structured;
    s.branches = get_field<std::size_t>(j, "T");
    s.blocks = get_field<std::vector<std::size_t>>(j, "blocks");
  } else {
    throw SpecError(fmt::format("unknown source kind '{}'", kind));
  }
  return s;
}

bool is_matrix_kind(ExperimentKind k) { return k == ExperimentKind::coherence || k == ExperimentKind::recovery; }

void check_shape(const Shape &s, const char *what) {
  if (s.empty()) throw SpecError(fmt::format("{} must not be empty", what));
  for (auto d : s)
    if (d == 0) throw SpecError(fmt::format("{} {} has a zero extent", what, to_string(s)));
}

void check_measurement(const Shape &signal, const Shape &meas) {
  check_shape(meas, "measurement shape");
  if (meas.size() != signal.size()) {
    throw SpecError(fmt::format("measurement shape {} and signal shape {} differ in order", to_string(meas),
                                to_string(signal)));
  }
  for (std::size_t j = 0; j < meas.size(); ++j) {
    if (meas[j] > signal[j]) {
      throw SpecError(fmt::format("measurement shape {} exceeds signal shape {} on mode {}", to_string(meas),
                                  to_string(signal), j));
    }
  }
}

void check_blocks(const std::vector<std::size_t> &blocks, std::size_t branches, const Shape &signal) {
  if (blocks.empty()) return;
  if (blocks.size() != branches) {
    throw SpecError(fmt::format("{} block sizes given for {} branches", blocks.size(), branches));
  }
  for (auto b : blocks) {
    for (std::size_t j = 0; j < std::min<std::size_t>(2, signal.size()); ++j) {
      if (b > 1 && signal[j] % b != 0) {
        throw SpecError(fmt::format("block size {} does not divide mode {} of {}", b, j, to_string(signal)));
      }
    }
  }
}

void check_inputs(const std::vector<fs::path> &inputs) {
  if (inputs.empty()) throw SpecError("no inputs given");
  for (const auto &p : inputs)
    if (!fs::exists(p)) throw SpecError(fmt::format("input '{}' does not exist", p.string()));
}

double sample_std(const std::vector<double> &v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

DenseTensor crop(const DenseTensor &img, const Shape &shape) {
  DenseTensor out(shape);
  const std::size_t w = img.dim(1);
  const std::size_t c = img.order() == 3 ? img.dim(2) : 1;
  for (std::size_t i = 0; i < shape[0]; ++i)
    for (std::size_t jj = 0; jj < shape[1]; ++jj)
      for (std::size_t ch = 0; ch < c; ++ch) out[(i * shape[1] + jj) * c + ch] = img[(i * w + jj) * c + ch];
  return out;
}

std::string ssim_or_nan(const DenseTensor &a, const DenseTensor &b) {
  const SsimParams params;
  if (a.dim(0) < params.window || a.dim(1) < params.window) return "nan";
  return fmt::format("{}", ssim(a, b, params));
}

struct ImageScore {
  std::string file;
  double psnr = 0.0;
  std::string ssim;
};

std::string metrics_csv(const std::vector<std::optional<ImageScore>> &scores) {
  std::string out = "file,psnr,ssim\n";
  for (const auto &s : scores)
    if (s) out += fmt::format("{},{},{}\n", csv_field(s->file), s->psnr, s->ssim);
  return out;
}

json state_to_json(const TrainingState &s) {
  return json{{"epoch", s.epoch}, {"schedule_position", s.schedule_position}, {"rng_state", s.rng_state}};
}

} // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
  case ExperimentKind::coherence: return "coherence";
  case ExperimentKind::recovery: return "recovery";
  case ExperimentKind::sense: return "sense";
  case ExperimentKind::train: return "train";
  case ExperimentKind::eval: return "eval";
  }
  return "unknown";
}

ExperimentSpec parse_experiment_spec(const std::string &json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error &e) {
    throw SpecError(fmt::format("spec is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw SpecError("spec must be a JSON object");

  ExperimentSpec spec;
  spec.kind = parse_kind(get_field<std::string>(doc, "kind"));
  const bool matrix = is_matrix_kind(spec.kind);

  static const std::set<std::string> common = {"kind", "seed", "trials", "threads", "out", "comment"};
  static const std::set<std::string> matrix_keys = {"signal_shape", "measurement_shapes", "T", "unconstrained",
                                                    "sources", "k"};
  static const std::set<std::string> image_keys = {
      "inputs", "checkpoint", "measurement_shape", "measurement_rate", "T", "blocks", "init", "adjoint_init",
      "patch_shape", "epochs", "batch_size", "learning_rate", "schedule", "validation_fraction", "alpha", "beta",
      "gamma", "epsilon"};
  for (const auto &item : doc.items()) {
    const auto &allowed = matrix ? matrix_keys : image_keys;
    if (!common.count(item.key()) && !allowed.count(item.key())) {
      throw SpecError(fmt::format("unknown field '{}' for a {} spec", item.key(), to_string(spec.kind)));
    }
  }

  if (doc.contains("seed")) spec.seed = get_field<std::uint64_t>(doc, "seed");
  if (doc.contains("trials")) spec.trials = get_field<std::size_t>(doc, "trials");
  if (doc.contains("threads")) spec.threads = get_field<std::size_t>(doc, "threads");
  if (doc.contains("out")) spec.out = get_field<std::string>(doc, "out");

  if (matrix) {
    spec.signal_shape = get_field<Shape>(doc, "signal_shape");
    spec.measurement_shapes = get_field<std::vector<Shape>>(doc, "measurement_shapes");
    if (doc.contains("sources")) {
      for (const auto &s : doc.at("sources")) spec.sources.push_back(parse_source(s));
    } else {
      if (!doc.contains("unconstrained") || get_field<bool>(doc, "unconstrained")) {
        spec.sources.push_back(SourceSpec{MatrixSource::Kind::unconstrained, 0, {}});
      }
      if (doc.contains("T")) {
        for (auto t : get_field<std::vector<std::size_t>>(doc, "T")) {
          spec.sources.push_back(SourceSpec{MatrixSource::Kind::tensor_sum, t, {}});
        }
      }
    }
    if (doc.contains("k")) {
      const auto &k = doc.at("k");
      spec.k_values = k.is_array() ? get_field<std::vector<std::size_t>>(doc, "k")
                                   : std::vector<std::size_t>{get_field<std::size_t>(doc, "k")};
    }
    return spec;
  }

  if (doc.contains("inputs")) {
    const auto &in = doc.at("inputs");
    if (in.is_string()) {
      spec.inputs.emplace_back(in.get<std::string>());
    } else {
      for (const auto &p : get_field<std::vector<std::string>>(doc, "inputs")) spec.inputs.emplace_back(p);
    }
  }
  if (doc.contains("checkpoint")) spec.checkpoint = fs::path(get_field<std::string>(doc, "checkpoint"));
  if (doc.contains("measurement_shape")) spec.measurement_shape = get_field<Shape>(doc, "measurement_shape");
  if (doc.contains("measurement_rate")) spec.measurement_rate = get_field<double>(doc, "measurement_rate");
  if (doc.contains("T")) spec.branches = get_field<std::size_t>(doc, "T");
  if (doc.contains("blocks")) spec.blocks = get_field<std::vector<std::size_t>>(doc, "blocks");
  if (doc.contains("init")) {
    const auto init = get_field<std::string>(doc, "init");
    if (init == "gaussian") {
      spec.init = WeightInit::gaussian;
    } else if (init == "identity") {
      spec.init = WeightInit::identity;
    } else {
      throw SpecError(fmt::format("unknown init '{}'", init));
    }
  }
  if (doc.contains("adjoint_init")) {
    const auto init = get_field<std::string>(doc, "adjoint_init");
    if (init == "transpose") {
      spec.adjoint_init = AdjointInit::Kind::transpose;
    } else if (init == "gaussian") {
      spec.adjoint_init = AdjointInit::Kind::gaussian;
    } else {
      throw SpecError(fmt::format("unknown adjoint_init '{}'", init));
    }
  }
  if (doc.contains("patch_shape")) spec.patch_shape = get_field<Shape>(doc, "patch_shape");
  if (doc.contains("epochs")) spec.training.epochs = get_field<std::size_t>(doc, "epochs");
  if (doc.contains("batch_size")) spec.training.batch_size = get_field<std::size_t>(doc, "batch_size");
  if (doc.contains("learning_rate")) spec.learning_rate = get_field<double>(doc, "learning_rate");
  if (doc.contains("schedule")) {
    for (const auto &s : doc.at("schedule")) {
      spec.training.schedule.push_back(LrStage{get_field<std::size_t>(s, "epochs"), get_field<double>(s, "rate")});
    }
  }
  if (doc.contains("validation_fraction")) {
    spec.training.validation_fraction = get_field<double>(doc, "validation_fraction");
  }
  if (doc.contains("alpha")) spec.loss.alpha = get_field<double>(doc, "alpha");
  if (doc.contains("beta")) spec.loss.beta = get_field<double>(doc, "beta");
  if (doc.contains("gamma")) spec.loss.gamma = get_field<double>(doc, "gamma");
  if (doc.contains("epsilon")) spec.loss.epsilon = get_field<double>(doc, "epsilon");
  return spec;
}

ExperimentSpec load_experiment_spec(const fs::path &path) {
  if (!fs::exists(path)) throw SpecError(fmt::format("spec file '{}' does not exist", path.string()));
  return parse_experiment_spec(read_text_file(path));
}

void ExperimentSpec::validate() const {
  if (out.empty()) throw SpecError("no output path given");
  if (trials == 0) throw SpecError("trials must be positive");

  if (is_matrix_kind(kind)) {
    check_shape(signal_shape, "signal shape");
    const std::size_t n = element_count(signal_shape);
    if (kind == ExperimentKind::coherence && n < 2) {
      throw SpecError("coherence needs at least two columns (N >= 2)");
    }
    if (measurement_shapes.empty()) throw SpecError("no measurement shapes given");
    for (const auto &m : measurement_shapes) check_measurement(signal_shape, m);
    if (sources.empty()) throw SpecError("no matrix sources given");
    for (const auto &s : sources) {
      if (s.kind == MatrixSource::Kind::unconstrained) continue;
      if (s.branches == 0) throw SpecError("tensor sources need T >= 1");
      if (s.kind == MatrixSource::Kind::structured) {
        if (s.blocks.empty()) throw SpecError("structured sources need block sizes");
        check_blocks(s.blocks, s.branches, signal_shape);
      }
    }
    if (kind == ExperimentKind::recovery) {
      if (k_values.empty()) throw SpecError("recovery needs a sparsity level k");
      for (auto k : k_values)
        if (k > n) throw SpecError(fmt::format("k = {} exceeds N = {}", k, n));
    }
    return;
  }

  check_inputs(inputs);
  if (branches == 0) throw SpecError("T must be at least 1");
  if (measurement_rate && !(*measurement_rate > 0.0 && *measurement_rate <= 1.0)) {
    throw SpecError("measurement_rate must lie in (0, 1]");
  }

  const bool needs_design = kind == ExperimentKind::train || (kind == ExperimentKind::sense && !checkpoint);
  if (kind == ExperimentKind::eval && !checkpoint) throw SpecError("eval needs a checkpoint");
  if (checkpoint && !fs::exists(*checkpoint)) {
    throw SpecError(fmt::format("checkpoint '{}' does not exist", checkpoint->string()));
  }
  if (needs_design && measurement_shape.empty() && !measurement_rate) {
    throw SpecError("either measurement_shape or measurement_rate is required");
  }
  if (!measurement_shape.empty()) check_shape(measurement_shape, "measurement shape");

  if (kind == ExperimentKind::train) {
    check_shape(patch_shape, "patch shape");
    if (!(patch_shape.size() == 2 || (patch_shape.size() == 3 && patch_shape[2] == 3))) {
      throw SpecError("patch_shape must be (h, w) or (h, w, 3)");
    }
    const auto meas = measurement_shape_for(*this, patch_shape);
    check_measurement(patch_shape, meas);
    check_blocks(blocks, branches, patch_shape);
    if (training.batch_size == 0) throw SpecError("batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw SpecError("learning_rate must be >= 0");
    try {
      loss.validate();
      auto t = training;
      if (t.schedule.empty()) t.schedule = TrainConfig::step_schedule(t.epochs, learning_rate);
      t.validate();
    } catch (const std::invalid_argument &e) {
      throw SpecError(e.what());
    }
  } else if (!blocks.empty() && blocks.size() != branches) {
    throw SpecError(fmt::format("{} block sizes given for {} branches", blocks.size(), branches));
  }
}

MatrixSource make_source(const SourceSpec &spec, const Shape &signal_shape, const Shape &measurement_shape) {
  MatrixSource src;
  src.kind = spec.kind;
  src.branches = spec.kind == MatrixSource::Kind::unconstrained ? 1 : spec.branches;
  src.signal_shape = signal_shape;
  src.measurement_shape = measurement_shape;
  src.blocks = spec.blocks;
  return src;
}

std::vector<CoherenceRow> run_coherence_experiment(const ExperimentSpec &spec) {
  if (spec.kind != ExperimentKind::coherence) throw SpecError("not a coherence spec");
  spec.validate();
  const std::size_t n = element_count(spec.signal_shape);
  std::vector<CoherenceRow> rows;
  for (const auto &meas : spec.measurement_shapes) {
    for (const auto &s : spec.sources) {
      const auto src = make_source(s, spec.signal_shape, meas);
      std::vector<double> mu(spec.trials);
      parallel_for(spec.trials, thread_count(spec), [&](std::size_t r) {
        mu[r] = mutual_coherence(sample_matrix(src, derive_seed(spec.seed, r))).value;
      });
      double sum = 0.0;
      for (double v : mu) sum += v;
      const double mean = sum / static_cast<double>(mu.size());
      rows.push_back(CoherenceRow{src.label(), s.branches, element_count(meas), n, spec.trials, mean,
                                  sample_std(mu, mean)});
    }
  }
  return rows;
}

std::vector<RecoveryRow> run_recovery_experiment(const ExperimentSpec &spec) {
  if (spec.kind != ExperimentKind::recovery) throw SpecError("not a recovery spec");
  spec.validate();
  const std::size_t n = element_count(spec.signal_shape);
  std::vector<RecoveryRow> rows;
  for (auto k : spec.k_values) {
    for (const auto &meas : spec.measurement_shapes) {
      const std::size_t m = element_count(meas);
      for (const auto &s : spec.sources) {
        const auto src = make_source(s, spec.signal_shape, meas);
        const auto outcome = exact_recovery_rate(src, n, k, m, spec.trials, spec.seed, thread_count(spec));
        rows.push_back(RecoveryRow{src.label(), s.branches, m, k, n, spec.trials, outcome.rate});
      }
    }
  }
  return rows;
}

std::string coherence_csv(const std::vector<CoherenceRow> &rows) {
  std::string out = "source,T,m,N,trials,mean_mu,std_mu\n";
  for (const auto &r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.source, r.branches, r.m, r.n, r.trials, r.mean_mu, r.std_mu);
  }
  return out;
}

std::string recovery_csv(const std::vector<RecoveryRow> &rows) {
  std::string out = "source,T,m,k,N,trials,rate\n";
  for (const auto &r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.source, r.branches, r.m, r.k, r.n, r.trials, r.rate);
  }
  return out;
}

std::string training_csv(const std::vector<EpochMetrics> &history) {
  std::string out = "epoch,lr,train_L1,val_L1,val_PSNR\n";
  for (const auto &h : history) {
    out += fmt::format("{},{},{},{},{}\n", h.epoch, h.lr, h.train_l1, h.val_l1, h.val_psnr);
  }
  return out;
}

void save_checkpoint(const fs::path &path, const Checkpoint &ckpt) {
  json doc{{"format", kCheckpointFormat},
           {"version", 1},
           {"sensing", json::parse(serialize_operator(ckpt.sensing))},
           {"adjoint", json::parse(serialize_adjoint(ckpt.adjoint))},
           {"state", state_to_json(ckpt.state)}};
  ensure_parent(path);
  write_file_atomic(path, doc.dump(1));
}

Checkpoint load_checkpoint(const fs::path &path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error &e) {
    throw FormatError(fmt::format("checkpoint {}: {}", path.string(), e.what()));
  }
  if (doc.value("format", "") != kCheckpointFormat) {
    throw FormatError(fmt::format("checkpoint {}: missing format tag", path.string()));
  }
  Checkpoint ckpt;
  ckpt.sensing = deserialize_operator(doc.at("sensing").dump());
  ckpt.adjoint = deserialize_adjoint(doc.at("adjoint").dump());
  const auto &st = doc.at("state");
  ckpt.state.epoch = st.at("epoch").get<std::size_t>();
  ckpt.state.schedule_position = st.at("schedule_position").get<std::size_t>();
  ckpt.state.rng_state = st.at("rng_state").get<std::string>();
  if (ckpt.adjoint.input_shape() != ckpt.sensing.output_shape() ||
      ckpt.adjoint.output_shape() != ckpt.sensing.input_shape()) {
    throw FormatError(fmt::format("checkpoint {}: sensing and proxy operators disagree on shapes", path.string()));
  }
  return ckpt;
}

Shape measurement_shape_for(const ExperimentSpec &spec, const Shape &image_shape) {
  if (!spec.measurement_shape.empty()) {
    Shape m = spec.measurement_shape;
    if (m.size() == 2 && image_shape.size() == 3) m.push_back(image_shape[2]);
    if (m.size() != image_shape.size()) {
      throw ShapeError(fmt::format("measurement shape {} does not fit image shape {}", to_string(m),
                                   to_string(image_shape)));
    }
    return m;
  }
  if (!spec.measurement_rate) throw ShapeError("no measurement shape or rate");
  const double scale = std::sqrt(*spec.measurement_rate);
  Shape m = image_shape;
  for (std::size_t j = 0; j < std::min<std::size_t>(2, m.size()); ++j) {
    m[j] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(m[j]) * scale)));
  }
  return m;
}

Checkpoint build_pipeline(const ExperimentSpec &spec, const Shape &image_shape) {
  OperatorConfig config;
  config.input_shape = image_shape;
  config.output_shape = measurement_shape_for(spec, image_shape);
  config.branches = spec.branches;
  if (!spec.blocks.empty()) {
    if (spec.blocks.size() != spec.branches) throw ShapeError("one block size per branch is required");
    config.basis_plan = spatial_block_plan(spec.blocks, image_shape.size());
  }
  config.seed = spec.seed;
  config.init = spec.init;
  Checkpoint ckpt;
  ckpt.sensing = build_operator(config);
  ckpt.adjoint = build_adjoint(ckpt.sensing, AdjointInit{spec.adjoint_init, derive_seed(spec.seed, 1)});
  return ckpt;
}

std::vector<fs::path> collect_images(const std::vector<fs::path> &inputs) {
  std::vector<fs::path> files;
  auto is_image = [](const fs::path &p) {
    const auto ext = lower(p.extension().string());
    return ext == ".pgm" || ext == ".ppm";
  };
  for (const auto &in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto &e : fs::directory_iterator(in))
        if (e.is_regular_file() && is_image(e.path())) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  return files;
}

RunReport sense_and_proxy(const ExperimentSpec &spec) {
  spec.validate();
  fs::create_directories(spec.out);
  const auto files = collect_images(spec.inputs);
  std::optional<Checkpoint> fixed;
  if (spec.checkpoint) fixed = load_checkpoint(*spec.checkpoint);

  std::vector<std::optional<ImageScore>> scores(files.size());
  std::vector<std::optional<std::string>> failures(files.size());
  std::vector<std::vector<fs::path>> written(files.size());
  parallel_for(files.size(), thread_count(spec), [&](std::size_t i) {
    try {
      const auto image = load_image(files[i]).to_tensor();
      const Checkpoint ckpt = fixed ? *fixed : build_pipeline(spec, image.shape());
      if (ckpt.sensing.input_shape() != image.shape()) {
        throw ShapeError(fmt::format("image shape {} does not match operator input {}", to_string(image.shape()),
                                     to_string(ckpt.sensing.input_shape())));
      }
      const auto y = apply(ckpt.sensing, image);
      const auto estimate = ImageBuffer::from_tensor(proxy(ckpt.adjoint, y));
      const auto stem = files[i].stem().string();
      const auto meas_path = spec.out / (stem + ".tscs");
      const auto proxy_path = spec.out / (stem + (estimate.channels == 1 ? "_proxy.pgm" : "_proxy.ppm"));
      save_tensor(meas_path, y);
      save_image(estimate, proxy_path);
      written[i] = {meas_path, proxy_path};
      const auto est = estimate.to_tensor();
      scores[i] = ImageScore{files[i].string(), psnr(est, image), ssim_or_nan(est, image)};
    } catch (const std::exception &e) {
      failures[i] = e.what();
    }
  });

  RunReport report;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (failures[i]) report.errors.push_back(RunIssue{files[i].string(), *failures[i]});
    report.outputs.insert(report.outputs.end(), written[i].begin(), written[i].end());
  }
  const auto csv = spec.out / "metrics.csv";
  write_file_atomic(csv, metrics_csv(scores));
  report.outputs.push_back(csv);
  return report;
}

RunReport run_training(const ExperimentSpec &spec) {
  spec.validate();
  RunReport report;
  const std::size_t channels = spec.patch_shape.size() == 3 ? 3 : 1;
  std::vector<DenseTensor> patches;
  for (const auto &file : collect_images(spec.inputs)) {
    try {
      const auto img = load_image(file);
      if (img.channels != channels || img.height < spec.patch_shape[0] || img.width < spec.patch_shape[1]) {
        report.warnings.push_back(RunIssue{
            file.string(), fmt::format("{}x{}x{} image cannot supply a {} patch", img.height, img.width,
                                       img.channels, to_string(spec.patch_shape))});
        continue;
      }
      patches.push_back(crop(img.to_tensor(), spec.patch_shape));
    } catch (const std::exception &e) {
      report.warnings.push_back(RunIssue{file.string(), e.what()});
    }
  }
  if (patches.empty()) {
    report.errors.push_back(RunIssue{"corpus", "no usable patches in the corpus"});
    return report;
  }

  auto ckpt = build_pipeline(spec, spec.patch_shape);
  TrainConfig cfg = spec.training;
  cfg.seed = spec.seed;
  if (cfg.schedule.empty()) cfg.schedule = TrainConfig::step_schedule(cfg.epochs, spec.learning_rate);
  TrainResult result;
  try {
    result = train(ckpt.sensing, ckpt.adjoint, patches, spec.loss, cfg);
  } catch (const TrainingDivergedError &e) {
    report.errors.push_back(RunIssue{"training", e.what()});
    return report;
  }
  ckpt.state = result.state;

  fs::create_directories(spec.out);
  const auto ckpt_path = spec.out / "checkpoint.json";
  const auto csv_path = spec.out / "history.csv";
  save_checkpoint(ckpt_path, ckpt);
  write_file_atomic(csv_path, training_csv(result.history));
  report.outputs = {ckpt_path, csv_path};
  return report;
}

RunReport run_evaluation(const ExperimentSpec &spec) {
  spec.validate();
  const auto ckpt = load_checkpoint(*spec.checkpoint);
  const auto files = collect_images(spec.inputs);
  std::vector<std::optional<ImageScore>> scores(files.size());
  std::vector<std::optional<std::string>> failures(files.size());
  parallel_for(files.size(), thread_count(spec), [&](std::size_t i) {
    try {
      const auto image = load_image(files[i]).to_tensor();
      if (ckpt.sensing.input_shape() != image.shape()) {
        throw ShapeError(fmt::format("image shape {} does not match operator input {}", to_string(image.shape()),
                                     to_string(ckpt.sensing.input_shape())));
      }
      const auto est = ImageBuffer::from_tensor(proxy(ckpt.adjoint, apply(ckpt.sensing, image))).to_tensor();
      scores[i] = ImageScore{files[i].string(), psnr(est, image), ssim_or_nan(est, image)};
    } catch (const std::exception &e) {
      failures[i] = e.what();
    }
  });
  RunReport report;
  for (std::size_t i = 0; i < files.size(); ++i)
    if (failures[i]) report.errors.push_back(RunIssue{files[i].string(), *failures[i]});
  ensure_parent(spec.out);
  write_file_atomic(spec.out, metrics_csv(scores));
  report.outputs.push_back(spec.out);
  return report;
}

RunReport run_experiment(const ExperimentSpec &spec) {
  RunReport report;
  switch (spec.kind) {
  case ExperimentKind::coherence: {
    const auto rows = run_coherence_experiment(spec);
    ensure_parent(spec.out);
    write_file_atomic(spec.out, coherence_csv(rows));
    report.outputs.push_back(spec.out);
    return report;
  }
  case ExperimentKind::recovery: {
    const auto rows = run_recovery_experiment(spec);
    ensure_parent(spec.out);
    write_file_atomic(spec.out, recovery_csv(rows));
    report.outputs.push_back(spec.out);
    return report;
  }
  case ExperimentKind::sense: return sense_and_proxy(spec);
  case ExperimentKind::train: return run_training(spec);
  case ExperimentKind::eval: return run_evaluation(spec);
  }
  return report;
}

} // namespace tscs
