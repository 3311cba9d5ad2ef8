#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/IterativeLinearSolvers>

#include "nsmeta/errors.hpp"
#include "nsmeta/solvers.hpp"

namespace nsmeta {

namespace {

constexpr double kResidualTol = 1e-10;

struct Rule {
  std::vector<double> x, w;  // nodes and weights on [0, 1]
};

// Gauss-Legendre by Newton iteration on P_n.
const Rule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x[i] = 0.5 * (1.0 - z);
    r.w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

// Linear interpolant of eta between interior nodes, extended by the edge
// value to the domain boundary and zero outside it. Keeps constant eta
// exactly constant on the whole domain.
class Interp1D {
 public:
  Interp1D(std::span<const double> eta, const RteGrid& g)
      : eta_(eta.subspan(g.first, g.n_in)), h_(g.h), prefix_(g.n_in, 0.0) {
    for (std::size_t i = 1; i < eta_.size(); ++i) prefix_[i] = prefix_[i - 1] + 0.5 * (eta_[i - 1] + eta_[i]);
  }
  // node i of the interior sits at t = i; the domain is t in [-1/2, n_in - 1/2]
  double coord(double x) const { return x / h_ - 0.5; }
  double value(double x) const { return value_t(coord(x)); }
  double value_t(double t) const {
    const auto last = static_cast<double>(eta_.size() - 1);
    if (t < -0.5 || t > last + 0.5) return 0.0;
    if (t <= 0.0) return eta_.front();
    if (t >= last) return eta_.back();
    const auto i = static_cast<std::size_t>(t);
    const double u = t - static_cast<double>(i);
    return eta_[i] + (eta_[i + 1] - eta_[i]) * u;
  }
  // integral of the interpolant over t from -1/2
  double primitive(double t) const {
    const auto last = static_cast<double>(eta_.size() - 1);
    if (t <= -0.5) return 0.0;
    if (t <= 0.0) return eta_.front() * (t + 0.5);
    const double head = 0.5 * eta_.front();
    if (t >= last) return head + prefix_.back() + eta_.back() * (std::min(t, last + 0.5) - last);
    const auto i = static_cast<std::size_t>(t);
    const double u = t - static_cast<double>(i);
    return head + prefix_[i] + eta_[i] * u + 0.5 * (eta_[i + 1] - eta_[i]) * u * u;
  }
  // exact mean over [a, b]; short intervals go piece by piece to avoid
  // cancellation in the primitive difference
  double mean_t(double a, double b) const {
    if (a > b) std::swap(a, b);
    if (b == a) return value_t(a);
    if (b - a >= 2.0) return (primitive(b) - primitive(a)) / (b - a);
    const double last = static_cast<double>(eta_.size() - 1);
    double cuts[6];
    int nc = 0;
    for (double c : {-0.5, std::floor(a) + 1.0, std::floor(a) + 2.0, last + 0.5})
      if (c > a && c < b) cuts[nc++] = c;
    std::sort(cuts, cuts + nc);
    double sum = 0.0, lo = a;
    for (int k = 0; k <= nc; ++k) {
      const double hi = k < nc ? cuts[k] : b;
      sum += (hi - lo) * value_t(0.5 * (lo + hi));
      lo = hi;
    }
    return sum / (b - a);
  }
  double average(double x, double y, int m) const {
    if (x == y) return value(x);
    if (m == 0) return mean_t(coord(x), coord(y));
    double s = 0.5 * (value(x) + value(y));
    for (int k = 1; k < m - 1; ++k) s += value(x + (y - x) * k / (m - 1));
    return s / (m - 1);
  }

 private:
  std::span<const double> eta_;
  double h_;
  std::vector<double> prefix_;
};

class Interp2D {
 public:
  Interp2D(std::span<const double> eta, const RteGrid& g) : eta_(eta), g_(g) {}
  double value(double x0, double x1) const {
    const auto last = static_cast<double>(g_.n_in - 1);
    const double t0 = x0 / g_.h - 0.5, t1 = x1 / g_.h - 0.5;
    if (t0 < -0.5 || t0 > last + 0.5 || t1 < -0.5 || t1 > last + 0.5) return 0.0;
    const double c0 = std::clamp(t0, 0.0, last), c1 = std::clamp(t1, 0.0, last);
    const std::size_t top = g_.n_in > 1 ? g_.n_in - 2 : 0;
    const auto i0 = std::min(static_cast<std::size_t>(c0), top);
    const auto i1 = std::min(static_cast<std::size_t>(c1), top);
    const double u0 = c0 - static_cast<double>(i0), u1 = c1 - static_cast<double>(i1);
    const std::size_t n = g_.n, f = g_.first;
    const std::size_t j0 = std::min(i0 + 1, g_.n_in - 1), j1 = std::min(i1 + 1, g_.n_in - 1);
    const double a = eta_[(f + i0) * n + f + i1], b = eta_[(f + i0) * n + f + j1];
    const double c = eta_[(f + j0) * n + f + i1], d = eta_[(f + j0) * n + f + j1];
    return (1 - u0) * ((1 - u1) * a + u1 * b) + u0 * ((1 - u1) * c + u1 * d);
  }
  double average(const double* x, const double* y, int m) const {
    if (x[0] == y[0] && x[1] == y[1]) return value(x[0], x[1]);
    double s = 0.5 * (value(x[0], x[1]) + value(y[0], y[1]));
    for (int k = 1; k < m - 1; ++k) {
      const double a = static_cast<double>(k) / (m - 1);
      s += value(x[0] + (y[0] - x[0]) * a, x[1] + (y[1] - x[1]) * a);
    }
    return s / (m - 1);
  }

 private:
  std::span<const double> eta_;
  const RteGrid& g_;
};

void check_rte_eta(std::span<const double> eta, const RteGrid& grid) {
  if (eta.size() != grid.points()) throw ShapeError("rte: eta has the wrong size");
  for (std::size_t k = 0; k < eta.size(); ++k) {
    if (!(eta[k] >= 0.0) || !std::isfinite(eta[k])) throw DomainError("rte: eta must be nonnegative and finite");
    if (!grid.inside_flat(k) && eta[k] != 0.0) throw DomainError("rte: eta must vanish on the padding");
  }
}

void check_path_points(int m, bool exact_ok) {
  if (m == 0 && exact_ok) return;
  if (m < 2) throw ConfigError("rte: path quadrature needs at least 2 points");
}

double slab_kernel(double r, double tau) { return 0.5 * expint_e1(r * tau); }

}  // namespace

bool RteGrid::inside_flat(std::size_t k) const {
  if (dim == 1) return inside(k);
  return inside(k / n) && inside(k % n);
}

RteGrid make_rte_grid(int dim, std::size_t n, std::size_t n_in) {
  if (dim != 1 && dim != 2) throw ConfigError("rte: dimension must be 1 or 2");
  if (n_in == 0 || n_in > n || (n - n_in) % 2 != 0)
    throw ConfigError("rte: interior points must be positive, at most n, and leave even padding");
  if (n < 2) throw ConfigError("rte: need at least 2 grid points");
  RteGrid g;
  g.dim = dim;
  g.n = n;
  g.n_in = n_in;
  g.h = 1.0 / static_cast<double>(n_in);
  g.first = (n - n_in) / 2;
  return g;
}

double path_average_1d(std::span<const double> eta, const RteGrid& grid, double x, double y, int m) {
  check_path_points(m, true);
  if (eta.size() != grid.n) throw ShapeError("path_average_1d: eta has the wrong size");
  return Interp1D(eta, grid).average(x, y, m);
}

double path_average_2d(std::span<const double> eta, const RteGrid& grid, const double* x, const double* y,
                       int m) {
  check_path_points(m, false);
  if (eta.size() != grid.points()) throw ShapeError("path_average_2d: eta has the wrong size");
  return Interp2D(eta, grid).average(x, y, m);
}

Eigen::MatrixXd rte_kernel_1d(std::span<const double> eta, const RteGrid& grid, const RteOptions& opt) {
  if (grid.dim != 1) throw ConfigError("rte_kernel_1d: grid is not one-dimensional");
  check_rte_eta(eta, grid);
  check_path_points(opt.path_points, false);
  if (std::all_of(eta.begin(), eta.end(), [](double e) { return e == 0.0; }))
    throw DomainError("rte_kernel_1d: eta identically zero makes the slab kernel divergent");

  const Interp1D interp(eta, grid);
  const Rule& gl = gauss_legendre(opt.cell_points);
  const double h = grid.h;
  const int m = opt.exact_path_1d ? 0 : opt.path_points;
  const auto n = static_cast<Eigen::Index>(grid.n);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);

  for (Eigen::Index j = 0; j < n; ++j) {
    if (!grid.inside(static_cast<std::size_t>(j))) continue;
    const double xj = grid.coord(static_cast<std::size_t>(j));
    const bool edge = static_cast<std::size_t>(j) == grid.first ||
                      static_cast<std::size_t>(j) == grid.first + grid.n_in - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double xi = grid.coord(static_cast<std::size_t>(i));
      const auto d = std::abs(i - j);
      double v = 0.0;
      if (d == 0) {
        // s = (h/2) t^4 tames the log singularity at s = 0
        for (int side : {-1, 1})
          for (std::size_t q = 0; q < gl.x.size(); ++q) {
            const double t = gl.x[q];
            const double s = 0.5 * h * t * t * t * t;
            const double jac = 2.0 * h * t * t * t;
            if (s == 0.0) continue;
            const double y = xi + side * s;
            v += gl.w[q] * jac * slab_kernel(s, interp.average(xi, y, m));
          }
      } else if (d == 1 || (edge && !grid.inside(static_cast<std::size_t>(i)))) {
        // Halves meet at node j, where the path average has a kink. Nodes
        // cluster at the outer cell edge: seen from the vacuum padding the
        // optical depth vanishes at the domain boundary, a log singularity.
        for (int side : {-1, 1})
          for (std::size_t q = 0; q < gl.x.size(); ++q) {
            const double t = gl.x[q];
            const double y = xj + side * 0.5 * h * (1.0 - t * t * t * t);
            const double jac = 2.0 * h * t * t * t;
            const double depth = std::abs(xi - y) * interp.average(xi, y, m);
            if (depth > 0.0) v += gl.w[q] * jac * 0.5 * expint_e1(depth);  // depth 0 only at the edge node
          }
      } else {
        v = h * slab_kernel(std::abs(xi - xj), interp.average(xi, xj, m));
      }
      k(i, j) = v;
    }
  }
  return k;
}

Eigen::MatrixXd rte_kernel_2d(std::span<const double> eta, const RteGrid& grid, const RteOptions& opt) {
  if (grid.dim != 2) throw ConfigError("rte_kernel_2d: grid is not two-dimensional");
  check_rte_eta(eta, grid);
  check_path_points(opt.path_points, false);

  const Interp2D interp(eta, grid);
  const int nq = std::max(4, opt.cell_points / 4);
  const Rule& gl = gauss_legendre(nq);
  const double h = grid.h;
  const int m = opt.path_points;
  const std::size_t n = grid.n;
  const auto total = static_cast<Eigen::Index>(grid.points());
  const double c = 1.0 / (4.0 * std::numbers::pi);
  auto kernel = [&](const double* x, const double* y) {
    const double r = std::hypot(x[0] - y[0], x[1] - y[1]);
    return c * std::exp(-r * interp.average(x, y, m)) / r;
  };

  // Diagonal cell in polar coordinates: the 1/r cancels the Jacobian, so
  // each octant is a smooth integral over (theta, r).
  auto self_cell = [&](const double* x) {
    double v = 0.0;
    const double a = 0.5 * h;
    for (int oct = 0; oct < 8; ++oct) {
      for (int qt = 0; qt < nq; ++qt) {
        const double theta = (oct + gl.x[qt]) * std::numbers::pi / 4.0;
        const double ct = std::cos(theta), st = std::sin(theta);
        const double rmax = a / std::max(std::abs(ct), std::abs(st));
        double inner = 0.0;
        for (int qr = 0; qr < nq; ++qr) {
          const double r = rmax * gl.x[qr];
          const double y[2] = {x[0] + r * ct, x[1] + r * st};
          inner += gl.w[qr] * std::exp(-r * interp.average(x, y, m));
        }
        v += gl.w[qt] * (std::numbers::pi / 4.0) * rmax * inner;
      }
    }
    return c * v;
  };

  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(total, total);
  for (Eigen::Index j = 0; j < total; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (!grid.inside_flat(uj)) continue;
    const std::size_t j0 = uj / n, j1 = uj % n;
    const double xj[2] = {grid.coord(j0), grid.coord(j1)};
    for (Eigen::Index i = 0; i < total; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const std::size_t i0 = ui / n, i1 = ui % n;
      const double xi[2] = {grid.coord(i0), grid.coord(i1)};
      const auto d0 = i0 > j0 ? i0 - j0 : j0 - i0;
      const auto d1 = i1 > j1 ? i1 - j1 : j1 - i1;
      double v = 0.0;
      if (d0 == 0 && d1 == 0) {
        v = self_cell(xi);
      } else if (d0 <= 1 && d1 <= 1) {
        for (int a = 0; a < nq; ++a)
          for (int b = 0; b < nq; ++b) {
            const double y[2] = {xj[0] + h * (gl.x[a] - 0.5), xj[1] + h * (gl.x[b] - 0.5)};
            v += gl.w[a] * gl.w[b] * kernel(xi, y);
          }
        v *= h * h;
      } else {
        v = h * h * kernel(xi, xj);
      }
      k(i, j) = v;
    }
  }
  return k;
}

double scattering_radius(const Eigen::MatrixXd& kernel, std::span<const double> eta, const RteGrid& grid) {
  std::vector<Eigen::Index> in;
  for (std::size_t k = 0; k < grid.points(); ++k)
    if (grid.inside_flat(k)) in.push_back(static_cast<Eigen::Index>(k));
  const auto m = static_cast<Eigen::Index>(in.size());
  Eigen::MatrixXd a(m, m);
  bool any = false;
  for (Eigen::Index c = 0; c < m; ++c) {
    const double e = eta[static_cast<std::size_t>(in[c])];
    any = any || e != 0.0;
    for (Eigen::Index r = 0; r < m; ++r) a(r, c) = kernel(in[r], in[c]) * e;
  }
  if (!any) return 0.0;

  Eigen::VectorXd x = Eigen::VectorXd::Ones(m);
  double upper = 0.0;
  for (int it = 0; it < 5000; ++it) {
    const Eigen::VectorXd y = a * x;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      const double ratio = y(r) / x(r);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    upper = hi;
    if (hi - lo <= 1e-12 * hi) break;
    x = y / y.maxCoeff();
  }
  return upper;
}

RteSolver::RteSolver(const RteGrid& grid, std::vector<double> eta, const RteOptions& opt)
    : grid_(grid), eta_(std::move(eta)) {
  k_ = grid_.dim == 1 ? rte_kernel_1d(eta_, grid_, opt) : rte_kernel_2d(eta_, grid_, opt);
  radius_ = scattering_radius(k_, eta_, grid_);
  if (!(radius_ < opt.max_radius))
    throw ConditioningError("RteSolver: spectral radius " + std::to_string(radius_) + " too close to 1");
  const Eigen::Map<const Eigen::VectorXd> e(eta_.data(), static_cast<Eigen::Index>(eta_.size()));
  Eigen::MatrixXd a = -k_ * e.asDiagonal();
  a.diagonal().array() += 1.0;
  lu_.compute(a);
}

Solution RteSolver::solve(std::span<const double> f) const {
  if (f.size() != eta_.size()) throw ShapeError("RteSolver: f has the wrong size");
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!std::isfinite(f[k])) throw DataError("RteSolver: non-finite source");
    if (!grid_.inside_flat(k) && f[k] != 0.0) throw DataError("RteSolver: source must vanish on the padding");
  }
  const auto n = static_cast<Eigen::Index>(f.size());
  const Eigen::VectorXd b = k_ * Eigen::Map<const Eigen::VectorXd>(f.data(), n);
  Eigen::VectorXd u;
  const Eigen::Map<const Eigen::VectorXd> e(eta_.data(), n);
  if (f.size() > kDirectSolveLimit) {
    // Krylov solve on the dense operator, direct LU as fallback
    Eigen::MatrixXd a = -k_ * e.asDiagonal();
    a.diagonal().array() += 1.0;
    Eigen::BiCGSTAB<Eigen::MatrixXd, Eigen::IdentityPreconditioner> it;
    it.setTolerance(1e-14);
    it.compute(a);
    u = it.solve(b);
    if (it.info() != Eigen::Success) u = lu_.solve(b);
  } else {
    u = lu_.solve(b);
  }
  const Eigen::VectorXd r = u - k_ * (e.asDiagonal() * u) - b;
  Solution s;
  s.residual = b.norm() > 0.0 ? r.norm() / b.norm() : r.norm();
  if (!std::isfinite(s.residual) || s.residual > kResidualTol)
    throw ConditioningError("RteSolver: residual " + std::to_string(s.residual) + " above tolerance");
  s.u.assign(u.data(), u.data() + n);
  return s;
}

Eigen::MatrixXd RteSolver::green() const { return lu_.solve(k_); }

}  // namespace nsmeta
