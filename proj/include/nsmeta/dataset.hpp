#pragma once

// Training data (eta_i, {f_ij, u_ij}): generation with the reference
// solvers, residual certification and NSTF1 persistence (one file per split
// plus a dataset.json sidecar).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsmeta/config.hpp"
#include "nsmeta/solvers.hpp"

namespace nsmeta {

/// Reference solver for one eta of a problem (elliptic or RTE).
class ReferenceSolver {
 public:
  ReferenceSolver(const ProblemConfig& problem, std::vector<double> eta);
  ~ReferenceSolver();
  ReferenceSolver(ReferenceSolver&&) noexcept;

  Solution solve(std::span<const double> f) const;
  /// Relative residual of a stored pair: ||A u - f|| / ||f|| for the
  /// elliptic forms, ||(I - K eta) u - K f|| / ||K f|| for the RTE.
  double residual(std::span<const double> f, std::span<const double> u) const;
  /// Dense solution operator on the full grid.
  Eigen::MatrixXd green() const;
  /// RTE spectral radius of K eta on the domain; 0 for elliptic problems.
  double radius() const;

 private:
  ProblemConfig problem_;
  std::vector<double> eta_;
  std::optional<EllipticSolver> elliptic_;
  std::optional<RteSolver> rte_;
};

/// Grid mask of points whose f values are drawn (all points for elliptic
/// problems, the domain interior for the RTE).
std::vector<bool> source_mask(const ProblemConfig& problem);

struct SampleSet {
  std::string split;
  Recipe recipe = Recipe::schrodinger1d;
  int dim = 1;
  std::size_t n = 0;  // points per side
  std::size_t n_f = 0;
  std::vector<std::uint64_t> index;       // global eta index
  std::vector<std::vector<double>> eta;   // [eta]
  std::vector<std::vector<double>> f, u;  // [eta * n_f + j]

  std::size_t points() const { return dim == 2 ? n * n : n; }
  std::size_t samples() const { return f.size(); }
  std::size_t eta_of(std::size_t sample) const { return sample / n_f; }
};

struct Dataset {
  SampleSet train, test;
  /// Sidecar contents: resolved config, seed, resample count, residuals.
  Json meta;
};

/// Draws n_eta coefficients (train = first half by index), n_f sources per
/// eta and solves each. Every u is certified against data.residual_tol
/// (DataError otherwise). RTE draws whose spectral radius is too close to 1
/// are redrawn up to data.max_resample times per eta (DataError beyond).
/// Output is independent of `threads`.
Dataset generate_dataset(const Json& resolved_config, std::uint64_t seed, int threads = 1);

/// Writes train.nstf, test.nstf and dataset.json into dir (created).
void save_dataset(const Dataset& data, const std::string& dir);
/// Reads a saved dataset and, if certify is set, re-checks every residual
/// against the recorded tolerance (DataError on failure or corruption).
Dataset load_dataset(const std::string& dir, bool certify = true, int threads = 1);

/// Largest relative residual over a split.
double max_residual(const SampleSet& set, const ProblemConfig& problem, int threads = 1);

}  // namespace nsmeta
