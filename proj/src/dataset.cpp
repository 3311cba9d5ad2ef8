#include "nsmeta/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nsmeta/errors.hpp"
#include "nsmeta/nstf.hpp"
#include "nsmeta/parallel.hpp"

namespace nsmeta {

namespace fs = std::filesystem;

namespace {

EllipticForm form_of(Recipe r) {
  return r == Recipe::divergence1d ? EllipticForm::divergence : EllipticForm::schrodinger;
}

RteGrid grid_of(const ProblemConfig& p) { return make_rte_grid(p.dim(), p.eta.n, p.eta.n_in); }

// stream tags for derive_seed
constexpr std::uint64_t kEtaStream = 1;
constexpr std::uint64_t kSourceStream = 2;

std::vector<std::uint64_t> split_dims(const SampleSet& s, std::size_t lead, bool per_source) {
  std::vector<std::uint64_t> d{lead};
  if (per_source) d.push_back(s.n_f);
  d.push_back(s.n);
  if (s.dim == 2) d.push_back(s.n);
  return d;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<std::vector<double>> unflatten(const NamedTensor& t, std::size_t rows, std::size_t width) {
  if (t.data.size() != rows * width) throw DataError("dataset: entry " + t.name + " has the wrong size");
  std::vector<std::vector<double>> out(rows);
  for (std::size_t i = 0; i < rows; ++i)
    out[i].assign(t.data.begin() + static_cast<std::ptrdiff_t>(i * width),
                  t.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
  return out;
}

std::vector<NamedTensor> encode_split(const SampleSet& s) {
  std::vector<NamedTensor> e;
  e.push_back({"eta", split_dims(s, s.eta.size(), false), flatten(s.eta)});
  e.push_back({"f", split_dims(s, s.eta.size(), true), flatten(s.f)});
  e.push_back({"u", split_dims(s, s.eta.size(), true), flatten(s.u)});
  std::vector<double> idx(s.index.begin(), s.index.end());
  e.push_back({"index", {s.index.size()}, idx});
  return e;
}

SampleSet decode_split(const std::vector<NamedTensor>& entries, const std::string& split, const ProblemConfig& p,
                       std::size_t n_f) {
  SampleSet s;
  s.split = split;
  s.recipe = p.recipe;
  s.dim = p.dim();
  s.n = p.eta.n;
  s.n_f = n_f;
  const auto& idx = find_entry(entries, "index");
  if (idx.dims.size() != 1) throw DataError("dataset: index must be rank 1");
  const std::size_t m = idx.dims[0];
  for (double v : idx.data) {
    if (!(v >= 0.0) || v != std::floor(v)) throw DataError("dataset: bad eta index");
    s.index.push_back(static_cast<std::uint64_t>(v));
  }
  const auto expect = [&](const NamedTensor& t, bool per_source) {
    if (t.dims != split_dims(s, m, per_source)) throw DataError("dataset: entry " + t.name + " has unexpected dims");
  };
  const auto& eta = find_entry(entries, "eta");
  const auto& f = find_entry(entries, "f");
  const auto& u = find_entry(entries, "u");
  expect(eta, false);
  expect(f, true);
  expect(u, true);
  s.eta = unflatten(eta, m, s.points());
  s.f = unflatten(f, m * n_f, s.points());
  s.u = unflatten(u, m * n_f, s.points());
  return s;
}

}  // namespace

// ------------------------------------------------------------ reference

ReferenceSolver::ReferenceSolver(const ProblemConfig& problem, std::vector<double> eta)
    : problem_(problem), eta_(std::move(eta)) {
  if (eta_.size() != problem_.points()) throw ShapeError("ReferenceSolver: eta has the wrong size");
  if (problem_.is_rte())
    rte_.emplace(grid_of(problem_), eta_, problem_.rte);
  else
    elliptic_.emplace(form_of(problem_.recipe), eta_, problem_.dim());
}

ReferenceSolver::~ReferenceSolver() = default;
ReferenceSolver::ReferenceSolver(ReferenceSolver&&) noexcept = default;

Solution ReferenceSolver::solve(std::span<const double> f) const {
  return rte_ ? rte_->solve(f) : elliptic_->solve(f);
}

double ReferenceSolver::residual(std::span<const double> f, std::span<const double> u) const {
  if (f.size() != eta_.size() || u.size() != eta_.size()) throw ShapeError("ReferenceSolver: wrong sample size");
  const auto n = static_cast<Eigen::Index>(f.size());
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), n), uv(u.data(), n);
  Eigen::VectorXd r, b;
  if (rte_) {
    const Eigen::Map<const Eigen::VectorXd> e(eta_.data(), n);
    b = rte_->kernel() * fv;
    r = uv - rte_->kernel() * (e.asDiagonal() * uv) - b;
  } else {
    b = fv;
    r = elliptic_->matrix() * uv - b;
  }
  const double bn = b.norm();
  const double res = bn > 0.0 ? r.norm() / bn : r.norm();
  return std::isfinite(res) ? res : std::numeric_limits<double>::infinity();
}

Eigen::MatrixXd ReferenceSolver::green() const { return rte_ ? rte_->green() : elliptic_->green(); }

double ReferenceSolver::radius() const { return rte_ ? rte_->radius() : 0.0; }

std::vector<bool> source_mask(const ProblemConfig& problem) {
  std::vector<bool> mask(problem.points(), true);
  if (problem.is_rte()) {
    const RteGrid g = grid_of(problem);
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = g.inside_flat(k);
  }
  return mask;
}

// ----------------------------------------------------------- generation

Dataset generate_dataset(const Json& resolved, std::uint64_t seed, int threads) {
  const RunConfig cfg = parse_config(resolved);
  const ProblemConfig& p = cfg.problem;
  const std::size_t m = cfg.data.n_eta, nf = cfg.data.n_f;

  struct Slot {
    std::vector<double> eta;
    std::vector<std::vector<double>> f, u;
    int resamples = 0;
    double residual = 0.0;
    double radius = 0.0;
  };
  std::vector<Slot> slots(m);
  const std::uint64_t eta_base = derive_seed(seed, kEtaStream);
  const std::uint64_t src_base = derive_seed(seed, kSourceStream);

  parallel_for(m, threads, [&](std::size_t i) {
    Slot& s = slots[i];
    for (int attempt = 0;; ++attempt) {
      std::vector<double> eta = gen_eta(derive_seed(eta_base, i, static_cast<std::uint64_t>(attempt)), p.eta);
      try {
        ReferenceSolver solver(p, eta);
        s.radius = solver.radius();
        for (std::size_t j = 0; j < nf; ++j) {
          std::vector<double> f = gen_source(derive_seed(src_base, i, j), p.eta);
          Solution sol = solver.solve(f);
          const double res = solver.residual(f, sol.u);
          if (!(res <= cfg.data.residual_tol))
            throw DataError("dataset: sample " + std::to_string(i) + "/" + std::to_string(j) + " residual " +
                            std::to_string(res) + " above tolerance");
          s.residual = std::max(s.residual, res);
          s.f.push_back(std::move(f));
          s.u.push_back(std::move(sol.u));
        }
        s.eta = std::move(eta);
        s.resamples = attempt;
        return;
      } catch (const ConditioningError& e) {
        if (!p.is_rte()) throw DataError(std::string("dataset: ") + e.what());
        if (attempt >= cfg.data.max_resample)
          throw DataError("dataset: eta " + std::to_string(i) + " exceeded the resampling limit (" + e.what() + ")");
        s.f.clear();
        s.u.clear();
        s.residual = 0.0;
      }
    }
  });

  Dataset d;
  const std::size_t n_train = m / 2;
  for (SampleSet* set : {&d.train, &d.test}) {
    set->split = set == &d.train ? "train" : "test";
    set->recipe = p.recipe;
    set->dim = p.dim();
    set->n = p.eta.n;
    set->n_f = nf;
  }
  int resamples = 0;
  double worst = 0.0, radius = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    SampleSet& set = i < n_train ? d.train : d.test;
    Slot& s = slots[i];
    set.index.push_back(i);
    set.eta.push_back(std::move(s.eta));
    for (std::size_t j = 0; j < nf; ++j) {
      set.f.push_back(std::move(s.f[j]));
      set.u.push_back(std::move(s.u[j]));
    }
    resamples += s.resamples;
    worst = std::max(worst, s.residual);
    radius = std::max(radius, s.radius);
  }

  Json meta;
  meta["format"] = "NSTF1";
  meta["config"] = resolved;
  meta["seed"] = seed;
  meta["recipe"] = recipe_name(p.recipe);
  meta["n"] = p.eta.n;
  meta["n_eta"] = {{"train", d.train.eta.size()}, {"test", d.test.eta.size()}};
  meta["n_f"] = nf;
  meta["resamples"] = resamples;
  meta["max_residual"] = worst;
  meta["residual_tol"] = cfg.data.residual_tol;
  if (p.is_rte()) {
    meta["max_spectral_radius"] = radius;
    meta["solver"] = {{"kernel", p.dim() == 1 ? "0.5*E1(r*tau)" : "exp(-r*tau)/(4*pi*r)"},
                      {"path_rule", p.dim() == 1 && p.rte.exact_path_1d
                                        ? "exact integral of the linear interpolant"
                                        : "trapezoid with " + std::to_string(p.rte.path_points) + " points"},
                      {"cell_points", p.rte.cell_points},
                      {"max_radius", p.rte.max_radius}};
  } else {
    meta["solver"] = {{"stencil", p.dim() == 1 ? "3-point periodic" : "5-point periodic"},
                      {"direct_limit", kDirectSolveLimit}};
  }
  d.meta = meta;
  return d;
}

double max_residual(const SampleSet& set, const ProblemConfig& problem, int threads) {
  std::vector<double> worst(set.eta.size(), 0.0);
  parallel_for(set.eta.size(), threads, [&](std::size_t i) {
    const ReferenceSolver solver(problem, set.eta[i]);
    for (std::size_t j = 0; j < set.n_f; ++j) {
      const std::size_t s = i * set.n_f + j;
      worst[i] = std::max(worst[i], solver.residual(set.f[s], set.u[s]));
    }
  });
  double w = 0.0;
  for (double x : worst) w = std::max(w, x);
  return w;
}

// --------------------------------------------------------------- storage

void save_dataset(const Dataset& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("dataset: cannot create " + dir);
  write_nstf((fs::path(dir) / "train.nstf").string(), encode_split(data.train));
  write_nstf((fs::path(dir) / "test.nstf").string(), encode_split(data.test));
  std::ofstream out(fs::path(dir) / "dataset.json");
  if (!out) throw DataError("dataset: cannot write dataset.json in " + dir);
  out << data.meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir, bool certify, int threads) {
  Dataset d;
  {
    std::ifstream in(fs::path(dir) / "dataset.json");
    if (!in) throw DataError("dataset: no dataset.json in " + dir);
    d.meta = Json::parse(in, nullptr, false);
    if (d.meta.is_discarded() || !d.meta.is_object()) throw DataError("dataset: dataset.json is not valid JSON");
  }
  RunConfig cfg;
  std::size_t nf = 0;
  double tol = 0.0;
  try {
    cfg = parse_config(resolve_config(d.meta.at("config")));
    nf = d.meta.at("n_f").get<std::size_t>();
    tol = d.meta.at("residual_tol").get<double>();
  } catch (const std::exception& e) {
    throw DataError(std::string("dataset: bad sidecar: ") + e.what());
  }
  if (nf != cfg.data.n_f) throw DataError("dataset: sidecar n_f disagrees with its config");
  d.train = decode_split(read_nstf((fs::path(dir) / "train.nstf").string()), "train", cfg.problem, nf);
  d.test = decode_split(read_nstf((fs::path(dir) / "test.nstf").string()), "test", cfg.problem, nf);
  for (const SampleSet* s : {&d.train, &d.test})
    for (const auto& row : s->f)
      for (double v : row)
        if (!std::isfinite(v)) throw DataError("dataset: non-finite source in " + s->split);
  if (certify) {
    for (const SampleSet* s : {&d.train, &d.test}) {
      double worst;
      try {
        worst = max_residual(*s, cfg.problem, threads);
      } catch (const DataError&) {
        throw;
      } catch (const Error& e) {
        throw DataError("dataset: " + s->split + " failed to rebuild its solver: " + e.what());
      }
      if (!(worst <= tol))
        throw DataError("dataset: " + s->split + " residual " + std::to_string(worst) + " fails certification");
    }
  }
  return d;
}

}  // namespace nsmeta
