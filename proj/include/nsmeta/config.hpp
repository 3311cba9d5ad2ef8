#pragma once

// Run configuration: a JSON document with sections problem, data, model,
// train and eval. Defaults depend on problem.recipe and problem.n; user
// keys are merged over them and unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsmeta/model.hpp"
#include "nsmeta/solvers.hpp"

namespace nsmeta {

using Json = nlohmann::ordered_json;

struct ProblemConfig {
  Recipe recipe = Recipe::schrodinger1d;
  EtaOptions eta;
  RteOptions rte;
  int dim() const { return recipe_dim(recipe); }
  bool is_rte() const { return recipe == Recipe::rte1d || recipe == Recipe::rte2d; }
  std::size_t points() const { return dim() == 2 ? eta.n * eta.n : eta.n; }
};

struct DataConfig {
  std::size_t n_eta = 500;
  std::size_t n_f = 5;
  std::uint64_t seed = 0;
  /// Fresh eta draws allowed per sample when the RTE system is too close to singular.
  int max_resample = 100;
  double residual_tol = 1e-10;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double batch_fraction = 0.01;
  int max_epochs = 5000;
  int patience = 50;
  double min_improvement = 0.01;
  /// Wall-clock budget; 0 disables it.
  double max_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::size_t op_samples = 10;
  double power_tol = 1e-8;
  int power_restarts = 3;
};

struct RunConfig {
  ProblemConfig problem;
  DataConfig data;
  /// L follows from problem.n. Unset eta_shift / eta_scale / output_scale
  /// (JSON null) are filled from the training data.
  ModelConfig model;
  bool auto_eta_norm = true;
  bool auto_output_scale = true;
  TrainConfig train;
  EvalConfig eval;
};

/// Complete default document for a recipe and grid size.
Json default_config(Recipe recipe, std::size_t n);

/// Applies "a.b.c=value" overrides (value parsed as JSON, else taken as a
/// string), merges over the defaults and validates. Throws ConfigError.
Json resolve_config(Json user, const std::vector<std::string>& overrides = {});
/// Reads a JSON file (ConfigError if unreadable) and resolves it.
Json load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Typed view of a resolved document.
RunConfig parse_config(const Json& resolved);

}  // namespace nsmeta
