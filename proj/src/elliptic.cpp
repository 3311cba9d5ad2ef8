#include <cmath>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "nsmeta/errors.hpp"
#include "nsmeta/solvers.hpp"

namespace nsmeta {

namespace {

using Sparse = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kResidualTol = 1e-10;

std::size_t side_of(std::span<const double> eta, int dim) {
  const std::size_t n = grid_side(eta.size(), dim);
  if (n < 2) throw ShapeError("elliptic: need at least 2 points per dimension");
  return n;
}

void check_eta(std::span<const double> eta) {
  for (double e : eta)
    if (!(e > 0.0) || !std::isfinite(e)) throw DomainError("elliptic: eta must be positive and finite");
}

// Neighbour of flat index k along axis (0 or 1) by step +-1, periodic.
std::size_t neighbour(std::size_t k, std::size_t n, int dim, int axis, int step) {
  if (dim == 1) return (k + n + step) % n;
  std::size_t i = k / n, j = k % n;
  if (axis == 0) i = (i + n + step) % n;
  else j = (j + n + step) % n;
  return i * n + j;
}

double residual_of(const Sparse& a, const Eigen::VectorXd& u, const Eigen::VectorXd& b) {
  const double r = (a * u - b).norm();
  const double nb = b.norm();
  return nb > 0.0 ? r / nb : r;
}

}  // namespace

std::size_t grid_side(std::size_t points, int dim) {
  if (dim == 1) return points;
  if (dim != 2) throw ConfigError("grid dimension must be 1 or 2");
  auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(points))));
  if (n * n != points) throw ShapeError("grid_side: point count is not a square");
  return n;
}

Sparse schrodinger_operator(std::span<const double> eta, int dim) {
  const std::size_t n = side_of(eta, dim);
  const std::size_t total = eta.size();
  const double ih2 = static_cast<double>(n) * static_cast<double>(n);
  std::vector<Triplet> t;
  t.reserve(total * (2 * dim + 1));
  for (std::size_t k = 0; k < total; ++k) {
    t.emplace_back(k, k, 2.0 * dim * ih2 + eta[k]);
    for (int axis = 0; axis < dim; ++axis)
      for (int step : {-1, 1}) t.emplace_back(k, neighbour(k, n, dim, axis, step), -ih2);
  }
  Sparse a(total, total);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

Sparse divergence_operator(std::span<const double> eta, int dim) {
  const std::size_t n = side_of(eta, dim);
  const std::size_t total = eta.size();
  const double ih2 = static_cast<double>(n) * static_cast<double>(n);
  std::vector<Triplet> t;
  t.reserve(total * (2 * dim + 1));
  for (std::size_t k = 0; k < total; ++k) {
    for (int axis = 0; axis < dim; ++axis)
      for (int step : {-1, 1}) {
        const std::size_t nk = neighbour(k, n, dim, axis, step);
        const double mid = 0.5 * (eta[k] + eta[nk]) * ih2;
        t.emplace_back(k, k, mid);
        t.emplace_back(k, nk, -mid);
      }
  }
  Sparse a(total, total);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

struct EllipticSolver::Factor {
  bool iterative = false;
  Eigen::SparseLU<Sparse> lu;  // bordered system for the divergence form
  Eigen::ConjugateGradient<Sparse, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg_ic;
  Eigen::ConjugateGradient<Sparse, Eigen::Lower | Eigen::Upper> cg_jacobi;
};

EllipticSolver::EllipticSolver(EllipticForm form, std::vector<double> eta, int dim)
    : form_(form), dim_(dim), eta_(std::move(eta)), factor_(std::make_unique<Factor>()) {
  check_eta(eta_);
  a_ = form_ == EllipticForm::schrodinger ? schrodinger_operator(eta_, dim_)
                                          : divergence_operator(eta_, dim_);
  const auto total = static_cast<Eigen::Index>(eta_.size());
  factor_->iterative = eta_.size() > kDirectSolveLimit;
  if (factor_->iterative) {
    if (form_ == EllipticForm::schrodinger) {
      factor_->cg_ic.setTolerance(1e-14);
      factor_->cg_ic.setMaxIterations(static_cast<Eigen::Index>(10 * eta_.size()));
      factor_->cg_ic.compute(a_);
    } else {
      factor_->cg_jacobi.setTolerance(1e-14);
      factor_->cg_jacobi.setMaxIterations(static_cast<Eigen::Index>(10 * eta_.size()));
      factor_->cg_jacobi.compute(a_);
    }
    return;
  }
  if (form_ == EllipticForm::schrodinger) {
    factor_->lu.compute(a_);
  } else {
    // [A 1; 1^T 0] pins the mean; A is singular only along constants.
    std::vector<Triplet> t;
    t.reserve(a_.nonZeros() + 2 * eta_.size());
    for (int k = 0; k < a_.outerSize(); ++k)
      for (Sparse::InnerIterator it(a_, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index k = 0; k < total; ++k) {
      t.emplace_back(k, total, 1.0);
      t.emplace_back(total, k, 1.0);
    }
    Sparse b(total + 1, total + 1);
    b.setFromTriplets(t.begin(), t.end());
    factor_->lu.compute(b);
  }
  if (factor_->lu.info() != Eigen::Success) throw ConditioningError("EllipticSolver: factorization failed");
}

EllipticSolver::~EllipticSolver() = default;
EllipticSolver::EllipticSolver(EllipticSolver&&) noexcept = default;
EllipticSolver& EllipticSolver::operator=(EllipticSolver&&) noexcept = default;

bool EllipticSolver::iterative() const { return factor_->iterative; }

Solution EllipticSolver::solve(std::span<const double> f, bool project_mean) const {
  if (f.size() != eta_.size()) throw ShapeError("EllipticSolver: f has the wrong size");
  for (double x : f)
    if (!std::isfinite(x)) throw DataError("EllipticSolver: non-finite right-hand side");
  const auto total = static_cast<Eigen::Index>(eta_.size());
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.data(), total);

  if (form_ == EllipticForm::divergence) {
    const double mean = b.mean();
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    if (std::abs(mean) > 1e-12 * scale) {
      if (!project_mean) throw DataError("EllipticSolver: divergence form needs a zero-mean source");
    }
    b.array() -= mean;
  }

  Eigen::VectorXd u;
  if (factor_->iterative) {
    u = form_ == EllipticForm::schrodinger ? Eigen::VectorXd(factor_->cg_ic.solve(b))
                                           : Eigen::VectorXd(factor_->cg_jacobi.solve(b));
  } else if (form_ == EllipticForm::schrodinger) {
    u = factor_->lu.solve(b);
  } else {
    Eigen::VectorXd bb = Eigen::VectorXd::Zero(total + 1);
    bb.head(total) = b;
    u = factor_->lu.solve(bb).head(total);
  }
  if (form_ == EllipticForm::divergence) u.array() -= u.mean();

  Solution s;
  s.residual = residual_of(a_, u, b);
  s.u.assign(u.data(), u.data() + total);
  if (!std::isfinite(s.residual) || s.residual > kResidualTol)
    throw ConditioningError("EllipticSolver: residual " + std::to_string(s.residual) + " above tolerance");
  return s;
}

Eigen::MatrixXd EllipticSolver::green() const {
  const auto total = static_cast<Eigen::Index>(eta_.size());
  if (!factor_->iterative) {
    if (form_ == EllipticForm::schrodinger)
      return factor_->lu.solve(Eigen::MatrixXd::Identity(total, total));
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(total + 1, total);
    rhs.topRows(total).setIdentity();
    rhs.topRows(total).array() -= 1.0 / static_cast<double>(total);
    Eigen::MatrixXd g = factor_->lu.solve(rhs).topRows(total);
    for (Eigen::Index j = 0; j < total; ++j) g.col(j).array() -= g.col(j).mean();
    return g;
  }
  Eigen::MatrixXd g(total, total);
  std::vector<double> e(eta_.size(), 0.0);
  for (Eigen::Index j = 0; j < total; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    if (form_ == EllipticForm::divergence)
      for (auto& x : e) x -= 1.0 / static_cast<double>(total);
    const auto s = solve(e);
    g.col(j) = Eigen::Map<const Eigen::VectorXd>(s.u.data(), total);
  }
  return g;
}

}  // namespace nsmeta
