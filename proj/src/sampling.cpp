#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nsmeta/errors.hpp"
#include "nsmeta/solvers.hpp"

namespace nsmeta {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

bool is_rte(Recipe r) { return r == Recipe::rte1d || r == Recipe::rte2d; }

std::size_t coarse_count(const EtaOptions& opt) {
  return recipe_dim(opt.recipe) == 2 ? opt.coarse * opt.coarse : opt.coarse;
}

void check_options(const EtaOptions& opt) {
  if (opt.coarse == 0 || opt.n == 0) throw ConfigError("gen_eta: grid sizes must be positive");
  if (opt.coarse > opt.n) throw ConfigError("gen_eta: coarse grid larger than the fine grid");
  if (is_rte(opt.recipe)) {
    make_rte_grid(recipe_dim(opt.recipe), opt.n, opt.n_in);
    if (!(opt.eta_max > 0.0)) throw ConfigError("gen_eta: eta_max must be positive");
  } else if (!(opt.scale > 0.0) || opt.shift < 0.0) {
    throw ConfigError("gen_eta: scale must be positive and shift nonnegative");
  }
}

}  // namespace

Recipe parse_recipe(const std::string& name) {
  if (name == "schrodinger1d") return Recipe::schrodinger1d;
  if (name == "divergence1d") return Recipe::divergence1d;
  if (name == "schrodinger2d") return Recipe::schrodinger2d;
  if (name == "rte1d") return Recipe::rte1d;
  if (name == "rte2d") return Recipe::rte2d;
  throw ConfigError("unknown recipe '" + name + "'");
}

std::string recipe_name(Recipe r) {
  switch (r) {
    case Recipe::schrodinger1d: return "schrodinger1d";
    case Recipe::divergence1d: return "divergence1d";
    case Recipe::schrodinger2d: return "schrodinger2d";
    case Recipe::rte1d: return "rte1d";
    case Recipe::rte2d: return "rte2d";
  }
  return "";
}

int recipe_dim(Recipe r) { return r == Recipe::schrodinger2d || r == Recipe::rte2d ? 2 : 1; }

EtaOptions default_eta_options(Recipe r, std::size_t n) {
  EtaOptions o;
  o.recipe = r;
  o.n = n;
  switch (r) {
    case Recipe::schrodinger1d:
      o.coarse = 40;
      o.scale = 10.0;
      break;
    case Recipe::divergence1d:
      o.coarse = 40;
      o.scale = 0.2;
      o.shift = 0.5;
      break;
    case Recipe::schrodinger2d:
      o.coarse = 10;
      o.scale = 10.0;
      break;
    case Recipe::rte1d:
      // 300 of 320 points inside at full scale
      o.coarse = 40;
      o.n_in = n - 2 * std::max<std::size_t>(1, n / 32);
      o.eta_max = 5.0;
      break;
    case Recipe::rte2d:
      // 70 of 80 per side
      o.coarse = 10;
      o.n_in = n - 2 * std::max<std::size_t>(1, n / 16);
      o.eta_max = 2.0;
      break;
  }
  return o;
}

std::vector<double> fourier_interpolate(std::span<const double> coarse, std::size_t n) {
  const std::size_t m = coarse.size();
  if (m == 0) throw ConfigError("fourier_interpolate: empty input");
  if (m > n) throw ConfigError("fourier_interpolate: coarse grid larger than the fine grid");
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t kmax = m / 2;
  std::vector<double> re(kmax + 1, 0.0), im(kmax + 1, 0.0);
  for (std::size_t k = 0; k <= kmax; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      const double a = two_pi * static_cast<double>((k * j) % m) / static_cast<double>(m);
      re[k] += coarse[j] * std::cos(a);
      im[k] -= coarse[j] * std::sin(a);
    }
    re[k] /= static_cast<double>(m);
    im[k] /= static_cast<double>(m);
  }
  const bool even = m % 2 == 0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = re[0];
    for (std::size_t k = 1; k <= kmax; ++k) {
      const double a = two_pi * static_cast<double>((k * i) % n) / static_cast<double>(n);
      if (even && k == kmax) v += re[k] * std::cos(a);  // Nyquist term, real part only
      else v += 2.0 * (re[k] * std::cos(a) - im[k] * std::sin(a));
    }
    out[i] = v;
  }
  return out;
}

std::vector<double> fourier_interpolate_2d(std::span<const double> coarse, std::size_t m, std::size_t n) {
  if (coarse.size() != m * m) throw ShapeError("fourier_interpolate_2d: expected m*m samples");
  // rows first (m x n), then columns (n x n)
  std::vector<double> rows(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = fourier_interpolate(coarse.subspan(i * m, m), n);
    std::copy(r.begin(), r.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<double> out(n * n), col(m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = rows[i * n + j];
    const auto c = fourier_interpolate(col, n);
    for (std::size_t i = 0; i < n; ++i) out[i * n + j] = c[i];
  }
  return out;
}

std::vector<double> eta_from_coarse(std::span<const double> coarse, const EtaOptions& opt) {
  check_options(opt);
  if (coarse.size() != coarse_count(opt)) throw ShapeError("eta_from_coarse: wrong number of coarse samples");
  const int dim = recipe_dim(opt.recipe);
  std::vector<double> eta =
      dim == 2 ? fourier_interpolate_2d(coarse, opt.coarse, opt.n) : fourier_interpolate(coarse, opt.n);
  for (double& e : eta) e = std::exp(e);
  if (!is_rte(opt.recipe)) {
    for (double& e : eta) e = opt.scale * e + opt.shift;
    return eta;
  }
  const RteGrid grid = make_rte_grid(dim, opt.n, opt.n_in);
  double peak = 0.0;
  for (std::size_t k = 0; k < eta.size(); ++k) {
    if (!grid.inside_flat(k)) eta[k] = 0.0;
    peak = std::max(peak, eta[k]);
  }
  for (double& e : eta) e *= opt.eta_max / peak;
  return eta;
}

std::vector<double> gen_eta(std::uint64_t seed, const EtaOptions& opt) {
  check_options(opt);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> coarse(coarse_count(opt));
  for (double& c : coarse) c = normal(rng);
  return eta_from_coarse(coarse, opt);
}

std::vector<double> gen_source(std::uint64_t seed, const EtaOptions& opt) {
  const int dim = recipe_dim(opt.recipe);
  const std::size_t total = dim == 2 ? opt.n * opt.n : opt.n;
  std::mt19937_64 rng(seed);
  std::vector<double> f(total);
  if (is_rte(opt.recipe)) {
    const RteGrid grid = make_rte_grid(dim, opt.n, opt.n_in);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t k = 0; k < total; ++k) {
      const double v = uniform(rng);  // drawn for every point so the stream is layout independent
      f[k] = grid.inside_flat(k) ? v : 0.0;
    }
    return f;
  }
  std::normal_distribution<double> normal;
  for (double& x : f) x = normal(rng);
  if (opt.recipe == Recipe::divergence1d) {
    double mean = 0.0;
    for (double x : f) mean += x;
    mean /= static_cast<double>(total);
    for (double& x : f) x -= mean;
  }
  return f;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ a);
  return splitmix64(h ^ (b * 0xD6E8FEB86659FD93ULL));
}

}  // namespace nsmeta
