#pragma once

#include "tscs/learning.hpp"
#include "tscs/operators.hpp"
#include "tscs/recovery.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tscs {

enum class ExperimentKind { coherence, recovery, sense, train, eval };

std::string to_string(ExperimentKind kind);

/// Thrown for malformed or out-of-range experiment specs, before any work starts.
struct SpecError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// One matrix family in a coherence or recovery sweep.
struct SourceSpec {
  MatrixSource::Kind kind = MatrixSource::Kind::unconstrained;
  std::size_t branches = 1;
  std::vector<std::size_t> blocks; ///< structured only, one block size per branch
};

/// Parsed experiment description. JSON field names match the member names;
/// see README.md for the file format.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::coherence;
  std::uint64_t seed = 0;
  std::size_t trials = 250;
  std::size_t threads = 0; ///< 0: default_thread_count()
  std::filesystem::path out;

  // coherence / recovery
  Shape signal_shape;
  std::vector<Shape> measurement_shapes;
  std::vector<SourceSpec> sources;
  std::vector<std::size_t> k_values;

  // sense / train / eval
  std::vector<std::filesystem::path> inputs; ///< files or directories of .pgm/.ppm
  std::optional<std::filesystem::path> checkpoint;
  Shape measurement_shape;              ///< empty: derive from measurement_rate
  std::optional<double> measurement_rate;
  std::size_t branches = 1;
  std::vector<std::size_t> blocks;      ///< per-branch spatial DCT block size, empty: identity
  WeightInit init = WeightInit::gaussian;
  AdjointInit::Kind adjoint_init = AdjointInit::Kind::transpose;

  // train
  Shape patch_shape;
  LossConfig loss;
  TrainConfig training;
  double learning_rate = 0.0;

  /// Checks ranges and input paths. Throws SpecError.
  void validate() const;
};

ExperimentSpec parse_experiment_spec(const std::string &json_text);
ExperimentSpec load_experiment_spec(const std::filesystem::path &path);

/// Builds the matrix source for `spec` at one measurement shape.
MatrixSource make_source(const SourceSpec &spec, const Shape &signal_shape, const Shape &measurement_shape);

struct CoherenceRow {
  std::string source;
  std::size_t branches = 0; ///< 0 for the unconstrained baseline
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t trials = 0;
  double mean_mu = 0.0;
  double std_mu = 0.0; ///< sample standard deviation, 0 for a single trial
};

struct RecoveryRow {
  std::string source;
  std::size_t branches = 0;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t trials = 0;
  double rate = 0.0;
};

/// Realization r of every source is drawn from derive_seed(spec.seed, r).
std::vector<CoherenceRow> run_coherence_experiment(const ExperimentSpec &spec);
std::vector<RecoveryRow> run_recovery_experiment(const ExperimentSpec &spec);

/// Header: source,T,m,N,trials,mean_mu,std_mu
std::string coherence_csv(const std::vector<CoherenceRow> &rows);
/// Header: source,T,m,k,N,trials,rate
std::string recovery_csv(const std::vector<RecoveryRow> &rows);
/// Header: epoch,lr,train_L1,val_L1,val_PSNR
std::string training_csv(const std::vector<EpochMetrics> &history);

/// Sensing operator plus proxy operator, with the training state that produced them.
struct Checkpoint {
  TensorSumOperator sensing;
  AdjointOperator adjoint;
  TrainingState state;
};

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// Measurement shape for an image: the declared shape, or round(n_j * sqrt(rate))
/// on the two spatial modes. A colour mode is carried through at full size.
Shape measurement_shape_for(const ExperimentSpec &spec, const Shape &image_shape);

/// Operator and transpose-style proxy for one signal shape, built from the spec.
Checkpoint build_pipeline(const ExperimentSpec &spec, const Shape &image_shape);

/// Sorted .pgm/.ppm files named by `inputs` (directories are expanded).
std::vector<std::filesystem::path> collect_images(const std::vector<std::filesystem::path> &inputs);

struct RunIssue {
  std::string item;
  std::string message;
};

struct RunReport {
  std::vector<std::filesystem::path> outputs;
  std::vector<RunIssue> errors;   ///< work that failed; the run is unsuccessful
  std::vector<RunIssue> warnings; ///< skipped inputs that did not stop the run
  bool ok() const { return errors.empty(); }
};

/// Writes `<stem>.tscs`, `<stem>_proxy.pgm|ppm` per image and `metrics.csv`
/// (file,psnr,ssim) under spec.out. A failing image is reported and skipped.
RunReport sense_and_proxy(const ExperimentSpec &spec);

/// Trains on the corpus in spec.inputs; writes checkpoint.json and history.csv under spec.out.
RunReport run_training(const ExperimentSpec &spec);

/// Scores spec.checkpoint on spec.inputs; writes the metrics CSV to spec.out.
RunReport run_evaluation(const ExperimentSpec &spec);

/// Dispatches on spec.kind and writes every output atomically.
RunReport run_experiment(const ExperimentSpec &spec);

} // namespace tscs
