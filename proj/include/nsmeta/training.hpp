#pragma once

// Training loop, evaluation metrics, operator error and checkpoints.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsmeta/config.hpp"
#include "nsmeta/dataset.hpp"
#include "nsmeta/model.hpp"

namespace nsmeta {

struct EpochRecord {
  int epoch = 0;
  /// Mean normalized squared error over the epoch's steps.
  double loss = 0.0;
  /// Mean relative error of the training samples seen during the epoch
  /// (evaluated before each step's update).
  double train_eps = 0.0;
  double test_eps = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct Metrics {
  double train_eps = std::numeric_limits<double>::quiet_NaN();
  double test_eps = std::numeric_limits<double>::quiet_NaN();
  double op_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t op_samples = 0;
  std::vector<EpochRecord> history;
  double wall_seconds = 0.0;
  int epochs = 0;
  int best_epoch = 0;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
  std::string stop_reason;
};

Json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const Json& j);
/// epoch,loss,train_eps,test_eps,seconds with round-trip precision.
std::string history_csv(const std::vector<EpochRecord>& history);

struct TrainOptions {
  double learning_rate = 1e-3;
  double batch_fraction = 0.01;
  int max_epochs = 5000;
  int patience = 50;
  double min_improvement = 0.01;
  double max_seconds = 0.0;
  /// Optimizer steps cap; 0 disables it.
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainOptions train_options(const TrainConfig& t, int threads = 1);

/// Batch size max(1, round(fraction * count)).
std::size_t batch_size(double fraction, std::size_t count);

/// Fills the data-derived model fields that the config leaves unset:
/// eta_shift / eta_scale from the mean and spread of the training eta, and
/// output_scale = rms(u) / rms(f).
ModelConfig fit_model_config(const RunConfig& cfg, const SampleSet& train);

/// Minimizes the mean over samples of ||u - u_NN||^2 / mean ||u||^2 with
/// Nadam. Each batch is grouped by eta so eta_to_C runs once per distinct
/// coefficient. Stops when test eps fails to improve by min_improvement
/// (relative) for `patience` epochs, or at max_epochs / max_seconds /
/// max_steps, and restores the parameters of the best epoch. Without a
/// test set the running train eps drives early stopping. Throws
/// TrainingError on a non-finite loss or gradient.
Metrics train(MetaModel& model, const SampleSet& train, const SampleSet* test, const TrainOptions& opt);

/// ||u - u_NN|| / ||u|| per sample (0 when both vanish).
std::vector<double> relative_errors(const MetaModel& model, const SampleSet& set, int threads = 1);
double mean_relative_error(const MetaModel& model, const SampleSet& set, int threads = 1);

/// Largest singular value by power iteration on M^T M from `restarts`
/// random starts (max over starts), each run until the Rayleigh quotient
/// changes by less than tol relative.
double spectral_norm(const Eigen::MatrixXd& m, double tol = 1e-8, int restarts = 3, std::uint64_t seed = 0);

struct OperatorErrorResult {
  double mean = 0.0;
  std::vector<double> per_sample;
};

/// Mean of ||G - G_NN||_2 / ||G||_2 over the given eta, with G from the
/// reference solver. RTE: only domain columns are compared (sources vanish
/// on the padding). Divergence form: both act on zero-mean sources, G_NN
/// is compared after projecting out the constant.
OperatorErrorResult operator_error(const MetaModel& model, const ProblemConfig& problem,
                                   const std::vector<std::vector<double>>& etas, const EvalConfig& eval,
                                   int threads = 1);

/// model.nstf (one entry per parameter) and model.txt (descriptor) in dir.
void save_checkpoint(const MetaModel& model, const std::string& dir);
MetaModel load_checkpoint(const std::string& dir);

}  // namespace nsmeta
