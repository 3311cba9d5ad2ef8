#pragma once

// Reference solvers that produce training data: periodic elliptic PDEs
// (Schrodinger and divergence form), the RTE integral equation in slab (1D)
// and planar (2D) geometry, and the eta / f samplers.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace nsmeta {

/// Exponential integral E1(z) = -Ei(-z) for z > 0. Series below 1, Lentz
/// continued fraction above. Throws DomainError for z <= 0 or NaN.
double expint_e1(double z);

/// Side length of a square (dim 2) or line (dim 1) grid with `points` values.
std::size_t grid_side(std::size_t points, int dim);

// ---------------------------------------------------------------- elliptic

enum class EllipticForm { schrodinger, divergence };

struct Solution {
  std::vector<double> u;
  /// ||A u - b|| / ||b|| of the system actually solved.
  double residual = 0.0;
};

/// Periodic (-Lap_h + diag(eta)) with h = 1/N, 3-point / 5-point stencil.
Eigen::SparseMatrix<double> schrodinger_operator(std::span<const double> eta, int dim);
/// Periodic -div(eta grad) with eta at half-grid points taken as the
/// arithmetic mean of the adjacent nodes.
Eigen::SparseMatrix<double> divergence_operator(std::span<const double> eta, int dim);

/// Largest grid (total points) that still uses a direct sparse factorization.
inline constexpr std::size_t kDirectSolveLimit = 48 * 48;

class EllipticSolver {
 public:
  EllipticSolver(EllipticForm form, std::vector<double> eta, int dim);
  ~EllipticSolver();
  EllipticSolver(EllipticSolver&&) noexcept;
  EllipticSolver& operator=(EllipticSolver&&) noexcept;

  /// Divergence form: f must have zero mean (DataError otherwise) unless
  /// project_mean is set, in which case the mean is removed first. The
  /// returned u has zero mean.
  Solution solve(std::span<const double> f, bool project_mean = false) const;

  /// Dense solution operator by column solves. For the divergence form this
  /// is the pseudo-inverse acting on the zero-mean subspace.
  Eigen::MatrixXd green() const;

  const Eigen::SparseMatrix<double>& matrix() const { return a_; }
  EllipticForm form() const { return form_; }
  int dim() const { return dim_; }
  bool iterative() const;

 private:
  struct Factor;
  EllipticForm form_;
  int dim_;
  std::vector<double> eta_;
  Eigen::SparseMatrix<double> a_;
  std::unique_ptr<Factor> factor_;
};

// --------------------------------------------------------------------- RTE

/// Cell-centred grid of n points per dimension (n_in of them inside the
/// unit domain), h = 1/n_in, padding split evenly on both sides.
struct RteGrid {
  int dim = 1;
  std::size_t n = 0;
  std::size_t n_in = 0;
  double h = 0.0;
  std::size_t first = 0;

  std::size_t points() const { return dim == 2 ? n * n : n; }
  double coord(std::size_t i) const { return (static_cast<double>(i) - static_cast<double>(first) + 0.5) * h; }
  bool inside(std::size_t i) const { return i >= first && i < first + n_in; }
  /// Flat index is inside the domain (all coordinates).
  bool inside_flat(std::size_t k) const;
};

RteGrid make_rte_grid(int dim, std::size_t n, std::size_t n_in);

struct RteOptions {
  /// Trapezoid samples for the path average of eta.
  int path_points = 16;
  /// 1D only: integrate the piecewise-linear interpolant exactly instead of
  /// sampling it (path_points is then ignored).
  bool exact_path_1d = true;
  /// Gauss-Legendre nodes for cell-integrated entries near the diagonal.
  int cell_points = 64;
  /// Systems with spectral radius of K diag(eta) at or above this are rejected.
  double max_radius = 1.0 - 1e-6;
};

/// Average of the interpolated eta on the segment x -> y; m = 0 is exact (1D).
double path_average_1d(std::span<const double> eta, const RteGrid& grid, double x, double y, int m);
double path_average_2d(std::span<const double> eta, const RteGrid& grid, const double* x,
                       const double* y, int m);

/// Nystrom matrix of the positive slab kernel (1/2) E1(|x - y| tau), with
/// columns outside the domain set to zero (eta and f vanish there).
Eigen::MatrixXd rte_kernel_1d(std::span<const double> eta, const RteGrid& grid, const RteOptions& opt = {});
/// Nystrom matrix of exp(-|x - y| tau) / (4 pi |x - y|) on the plane.
Eigen::MatrixXd rte_kernel_2d(std::span<const double> eta, const RteGrid& grid, const RteOptions& opt = {});

/// Perron root of K diag(eta) restricted to the domain, by power iteration
/// with Collatz-Wielandt bounds (returns the certified upper bound).
double scattering_radius(const Eigen::MatrixXd& kernel, std::span<const double> eta, const RteGrid& grid);

class RteSolver {
 public:
  /// Builds the kernel and factors I - K diag(eta). Throws DomainError for
  /// negative eta, nonzero padding or (1D) eta identically zero, and
  /// ConditioningError when the spectral radius reaches max_radius.
  RteSolver(const RteGrid& grid, std::vector<double> eta, const RteOptions& opt = {});

  /// u = (I - K eta)^{-1} K f on the full padded grid.
  Solution solve(std::span<const double> f) const;
  Eigen::MatrixXd green() const;

  const Eigen::MatrixXd& kernel() const { return k_; }
  double radius() const { return radius_; }
  const RteGrid& grid() const { return grid_; }

 private:
  RteGrid grid_;
  std::vector<double> eta_;
  Eigen::MatrixXd k_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double radius_ = 0.0;
};

// ---------------------------------------------------------------- sampling

enum class Recipe { schrodinger1d, divergence1d, schrodinger2d, rte1d, rte2d };

Recipe parse_recipe(const std::string& name);
std::string recipe_name(Recipe r);
int recipe_dim(Recipe r);

struct EtaOptions {
  Recipe recipe = Recipe::schrodinger1d;
  std::size_t n = 64;       // fine points per dimension
  std::size_t coarse = 40;  // coarse points per dimension
  double scale = 10.0;
  double shift = 0.0;
  /// RTE only: interior points per dimension and the rescaled maximum.
  std::size_t n_in = 0;
  double eta_max = 5.0;
};

/// Published sampling defaults for a recipe on an n-point grid.
EtaOptions default_eta_options(Recipe r, std::size_t n);

/// Trigonometric interpolation of periodic samples on m points to n >= m
/// points (both uniform on [0, 1)). Throws ConfigError if m > n.
std::vector<double> fourier_interpolate(std::span<const double> coarse, std::size_t n);
/// Tensor-product version for m x m row-major samples.
std::vector<double> fourier_interpolate_2d(std::span<const double> coarse, std::size_t m, std::size_t n);

/// Coarse N(0,1) samples, Fourier interpolation, exp, then the recipe's
/// affine map (RTE: zero padding, rescale to eta_max).
std::vector<double> gen_eta(std::uint64_t seed, const EtaOptions& opt);
/// Same pipeline from given coarse values.
std::vector<double> eta_from_coarse(std::span<const double> coarse, const EtaOptions& opt);

/// Source terms: N(0,1) per point (elliptic; zero mean for divergence form),
/// U(0,1) inside the domain and zero on the padding (RTE).
std::vector<double> gen_source(std::uint64_t seed, const EtaOptions& opt);

/// Stateless seed derivation so per-sample streams do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace nsmeta
