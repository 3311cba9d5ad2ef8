#include "nsmeta/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "nsmeta/errors.hpp"
#include "nsmeta/nstf.hpp"
#include "nsmeta/parallel.hpp"

namespace nsmeta {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

Json num_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
double num_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::vector<Tensor> tensors_of(const MetaModel& model, const std::vector<std::vector<double>>& rows) {
  std::vector<Tensor> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(model.make_eta_tensor(r));
  return out;
}

}  // namespace

// --------------------------------------------------------------- metrics

Json metrics_to_json(const Metrics& m) {
  Json j;
  j["train_eps"] = num_or_null(m.train_eps);
  j["test_eps"] = num_or_null(m.test_eps);
  j["op_error"] = num_or_null(m.op_error);
  j["op_samples"] = m.op_samples;
  j["wall_seconds"] = m.wall_seconds;
  j["epochs"] = m.epochs;
  j["best_epoch"] = m.best_epoch;
  j["steps"] = m.steps;
  j["batch_size"] = m.batch_size;
  j["stop_reason"] = m.stop_reason;
  Json h = Json::array();
  for (const auto& e : m.history)
    h.push_back({{"epoch", e.epoch},
                 {"loss", num_or_null(e.loss)},
                 {"train_eps", num_or_null(e.train_eps)},
                 {"test_eps", num_or_null(e.test_eps)},
                 {"seconds", e.seconds}});
  j["history"] = h;
  return j;
}

Metrics metrics_from_json(const Json& j) {
  Metrics m;
  try {
    m.train_eps = num_from(j.at("train_eps"));
    m.test_eps = num_from(j.at("test_eps"));
    m.op_error = num_from(j.at("op_error"));
    m.op_samples = j.at("op_samples").get<std::size_t>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.epochs = j.at("epochs").get<int>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.steps = j.at("steps").get<std::size_t>();
    m.batch_size = j.at("batch_size").get<std::size_t>();
    m.stop_reason = j.at("stop_reason").get<std::string>();
    for (const auto& e : j.at("history")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<int>();
      r.loss = num_from(e.at("loss"));
      r.train_eps = num_from(e.at("train_eps"));
      r.test_eps = num_from(e.at("test_eps"));
      r.seconds = e.at("seconds").get<double>();
      m.history.push_back(r);
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("metrics: ") + e.what());
  }
  return m;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "epoch,loss,train_eps,test_eps,seconds\n";
  for (const auto& e : history)
    s << e.epoch << ',' << e.loss << ',' << e.train_eps << ',' << e.test_eps << ',' << e.seconds << '\n';
  return s.str();
}

// -------------------------------------------------------------- training

TrainOptions train_options(const TrainConfig& t, int threads) {
  TrainOptions o;
  o.learning_rate = t.learning_rate;
  o.batch_fraction = t.batch_fraction;
  o.max_epochs = t.max_epochs;
  o.patience = t.patience;
  o.min_improvement = t.min_improvement;
  o.max_seconds = t.max_seconds;
  o.seed = t.seed;
  o.threads = threads;
  return o;
}

std::size_t batch_size(double fraction, std::size_t count) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count))));
}

ModelConfig fit_model_config(const RunConfig& cfg, const SampleSet& train) {
  ModelConfig m = cfg.model;
  if (cfg.auto_eta_norm) {
    double sum = 0.0, sq = 0.0, count = 0.0;
    for (const auto& e : train.eta)
      for (double x : e) {
        sum += x;
        sq += x * x;
        count += 1.0;
      }
    const double mean = count > 0.0 ? sum / count : 0.0;
    const double var = count > 0.0 ? std::max(0.0, sq / count - mean * mean) : 0.0;
    m.eta_shift = mean;
    m.eta_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  if (cfg.auto_output_scale) {
    double fu = 0.0, ff = 0.0;
    for (std::size_t s = 0; s < train.samples(); ++s) {
      fu += sq_norm(train.u[s]);
      ff += sq_norm(train.f[s]);
    }
    m.output_scale = fu > 0.0 && ff > 0.0 ? std::sqrt(fu / ff) : 1.0;
  }
  validate(m);
  return m;
}

std::vector<double> relative_errors(const MetaModel& model, const SampleSet& set, int threads) {
  std::vector<double> err(set.samples(), 0.0);
  parallel_for(set.eta.size(), threads, [&](std::size_t i) {
    const auto C = model.effective_C(model.eta_to_C(model.make_eta_tensor(set.eta[i])));
    for (std::size_t j = 0; j < set.n_f; ++j) {
      const std::size_t s = i * set.n_f + j;
      const Tensor u = model.apply_C(C, model.make_eta_tensor(set.f[s]));
      double d = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) d += (u[k] - set.u[s][k]) * (u[k] - set.u[s][k]);
      const double ref = sq_norm(set.u[s]);
      err[s] = ref > 0.0 ? std::sqrt(d / ref) : std::sqrt(d);
    }
  });
  return err;
}

double mean_relative_error(const MetaModel& model, const SampleSet& set, int threads) {
  const auto e = relative_errors(model, set, threads);
  if (e.empty()) return 0.0;
  double s = 0.0;
  for (double x : e) s += x;
  return s / static_cast<double>(e.size());
}

Metrics train(MetaModel& model, const SampleSet& train, const SampleSet* test, const TrainOptions& opt) {
  const auto t0 = Clock::now();
  const std::size_t count = train.samples();
  if (count == 0) throw DataError("train: empty training set");
  if (train.points() != model.config().grid_points() || (test && test->points() != train.points()))
    throw ShapeError("train: dataset grid does not match the model");

  const std::size_t bs = std::min(batch_size(opt.batch_fraction, count), count);
  const std::vector<Tensor> etas = tensors_of(model, train.eta);
  const std::vector<Tensor> fs = tensors_of(model, train.f);
  std::vector<double> u_sq(count);
  double norm = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    u_sq[s] = sq_norm(train.u[s]);
    norm += u_sq[s];
  }
  norm /= static_cast<double>(count);
  if (norm == 0.0) norm = 1.0;  // zero targets: plain squared error

  NadamOptions nopt;
  nopt.learning_rate = opt.learning_rate;
  Nadam nadam(nopt);
  auto& params = model.parameters().values();
  const std::size_t np = params.size();

  Metrics m;
  m.batch_size = bs;
  std::vector<double> best_params = params;
  double best = std::numeric_limits<double>::infinity();
  double reference = std::numeric_limits<double>::infinity();
  int last_improvement = 0;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<double>> group_grad;
  std::vector<double> grad(np);

  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, eps_sum = 0.0;
    std::size_t seen = 0, epoch_steps = 0;
    bool step_cap = false;

    for (std::size_t start = 0; start < count; start += bs) {
      const std::size_t stop = std::min(start + bs, count);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::stable_sort(batch.begin(), batch.end(),
                       [&](std::size_t a, std::size_t b) { return train.eta_of(a) < train.eta_of(b); });
      std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end) in batch
      for (std::size_t k = 0; k < batch.size(); ++k) {
        if (k == 0 || train.eta_of(batch[k]) != train.eta_of(batch[k - 1])) groups.push_back({k, k});
        groups.back().second = k + 1;
      }
      if (group_grad.size() < groups.size()) group_grad.resize(groups.size());
      std::vector<double> group_loss(groups.size(), 0.0), group_eps(groups.size(), 0.0);
      const double scale = 1.0 / (static_cast<double>(batch.size()) * norm);

      parallel_for(groups.size(), opt.threads, [&](std::size_t g) {
        auto& gg = group_grad[g];
        gg.assign(np, 0.0);
        const std::size_t e = train.eta_of(batch[groups[g].first]);
        MetaModel::EtaCache ec;
        const auto raw = model.eta_to_C(etas[e], &ec);
        const auto C = model.effective_C(raw);
        ChannelCollection gC = model.zeros_like_C();
        for (std::size_t k = groups[g].first; k < groups[g].second; ++k) {
          const std::size_t s = batch[k];
          MetaModel::FCache fc;
          const Tensor u = model.apply_C(C, fs[s], &fc);
          Tensor gu(u.shape);
          double d = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) {
            const double r = u[i] - train.u[s][i];
            d += r * r;
            gu[i] = 2.0 * scale * r;
          }
          group_loss[g] += d * scale;
          group_eps[g] += u_sq[s] > 0.0 ? std::sqrt(d / u_sq[s]) : std::sqrt(d);
          const auto gc = model.apply_C_backward(C, fc, gu, gg);
          for (std::size_t l = 0; l < gC.levels.size(); ++l)
            for (std::size_t i = 0; i < gc.levels[l].size(); ++i) gC.levels[l][i] += gc.levels[l][i];
        }
        model.eta_backward(ec, model.effective_C_backward(gC), gg);
      });

      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t i = 0; i < np; ++i) grad[i] += group_grad[g][i];
        batch_loss += group_loss[g];
        eps_sum += group_eps[g];
      }
      if (!std::isfinite(batch_loss))
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(m.steps + 1));
      nadam.step(params, grad);
      loss_sum += batch_loss;
      seen += batch.size();
      ++epoch_steps;
      ++m.steps;
      if (opt.max_steps > 0 && m.steps >= opt.max_steps) {
        step_cap = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(epoch_steps);
    rec.train_eps = eps_sum / static_cast<double>(seen);
    if (test && test->samples() > 0) rec.test_eps = mean_relative_error(model, *test, opt.threads);
    rec.seconds = seconds_since(t0);
    m.history.push_back(rec);
    m.epochs = epoch;
    if (opt.on_epoch) opt.on_epoch(rec);

    // the running train eps lags one update; it only drives stopping without a test set
    const double score = std::isfinite(rec.test_eps) ? rec.test_eps : rec.train_eps;
    if (!std::isfinite(score)) throw TrainingError("train: non-finite error at epoch " + std::to_string(epoch));
    if (score < best) {
      best = score;
      best_params = params;
      m.best_epoch = epoch;
    }
    if (score < reference * (1.0 - opt.min_improvement)) {
      reference = score;
      last_improvement = epoch;
    }
    if (step_cap) {
      m.stop_reason = "max_steps";
      break;
    }
    if (epoch - last_improvement >= opt.patience) {
      m.stop_reason = "plateau";
      break;
    }
    if (opt.max_seconds > 0.0 && rec.seconds >= opt.max_seconds) {
      m.stop_reason = "max_seconds";
      break;
    }
  }
  if (m.stop_reason.empty()) m.stop_reason = "max_epochs";

  params = best_params;
  m.train_eps = mean_relative_error(model, train, opt.threads);
  if (test && test->samples() > 0) m.test_eps = mean_relative_error(model, *test, opt.threads);
  m.wall_seconds = seconds_since(t0);
  return m;
}

// -------------------------------------------------------- operator error

double spectral_norm(const Eigen::MatrixXd& a, double tol, int restarts, std::uint64_t seed) {
  if (a.size() == 0) return 0.0;
  constexpr int kMaxIter = 100000;
  double best = 0.0;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::normal_distribution<double> normal;
    Eigen::VectorXd x(a.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    x.normalize();
    double lambda = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
      const Eigen::VectorXd y = a * x;
      const double next = y.squaredNorm();
      Eigen::VectorXd z = a.transpose() * y;
      const double zn = z.norm();
      if (zn == 0.0) {
        lambda = next;
        break;
      }
      x = z / zn;
      const bool done = it > 0 && std::abs(next - lambda) <= tol * next;
      lambda = next;
      if (done) break;
    }
    best = std::max(best, lambda);
  }
  return std::sqrt(best);
}

OperatorErrorResult operator_error(const MetaModel& model, const ProblemConfig& problem,
                                   const std::vector<std::vector<double>>& etas, const EvalConfig& eval,
                                   int threads) {
  OperatorErrorResult r;
  r.per_sample.assign(etas.size(), 0.0);
  const std::vector<bool> mask = source_mask(problem);
  std::vector<Eigen::Index> cols;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k]) cols.push_back(static_cast<Eigen::Index>(k));

  parallel_for(etas.size(), threads, [&](std::size_t i) {
    const ReferenceSolver ref(problem, etas[i]);
    Eigen::MatrixXd g = ref.green();
    Eigen::MatrixXd gnn = model.export_operator(model.make_eta_tensor(etas[i]));
    if (problem.recipe == Recipe::divergence1d) {
      // right projection onto zero-mean sources
      const Eigen::VectorXd row_mean = gnn.rowwise().mean();
      gnn.colwise() -= row_mean;
    }
    if (problem.is_rte()) {
      g = g(Eigen::all, cols).eval();
      gnn = gnn(Eigen::all, cols).eval();
    }
    const std::uint64_t seed = derive_seed(0x6f70, i);
    const double gn = spectral_norm(g, eval.power_tol, eval.power_restarts, seed);
    const double dn = spectral_norm(g - gnn, eval.power_tol, eval.power_restarts, seed);
    r.per_sample[i] = gn > 0.0 ? dn / gn : dn;
  });
  double s = 0.0;
  for (double x : r.per_sample) s += x;
  r.mean = etas.empty() ? 0.0 : s / static_cast<double>(etas.size());
  return r;
}

// ------------------------------------------------------------ checkpoint

void save_checkpoint(const MetaModel& model, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("checkpoint: cannot create " + dir);
  std::vector<NamedTensor> entries;
  const auto& store = model.parameters();
  for (std::size_t id = 0; id < store.entries().size(); ++id) {
    const auto& e = store.entry(id);
    const auto v = store.view(id);
    entries.push_back({e.name, std::vector<std::uint64_t>(e.shape.begin(), e.shape.end()),
                       std::vector<double>(v.begin(), v.end())});
  }
  write_nstf((fs::path(dir) / "model.nstf").string(), entries);
  std::ofstream out(fs::path(dir) / "model.txt");
  if (!out) throw DataError("checkpoint: cannot write model.txt in " + dir);
  out << describe(model.config());
}

MetaModel load_checkpoint(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "model.txt");
  if (!in) throw DataError("checkpoint: no model.txt in " + dir);
  std::ostringstream text;
  text << in.rdbuf();
  ModelConfig cfg;
  try {
    cfg = parse_descriptor(text.str());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  MetaModel model(cfg);
  const auto entries = read_nstf((fs::path(dir) / "model.nstf").string());
  auto& store = model.parameters();
  if (entries.size() != store.entries().size()) throw DataError("checkpoint: parameter count mismatch");
  for (const auto& t : entries) {
    const std::size_t id = store.find(t.name);
    const auto& e = store.entry(id);
    if (std::vector<std::uint64_t>(e.shape.begin(), e.shape.end()) != t.dims)
      throw DataError("checkpoint: parameter " + t.name + " has the wrong shape");
    auto v = store.view(id);
    std::copy(t.data.begin(), t.data.end(), v.begin());
  }
  for (double x : store.values())
    if (!std::isfinite(x)) throw DataError("checkpoint: non-finite parameter");
  return model;
}

}  // namespace nsmeta
