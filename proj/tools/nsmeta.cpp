// nsmeta command line: data generation, training, evaluation, operator
// export, oracle verification and matvec benchmarks.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "nsmeta/errors.hpp"
#include "nsmeta/nsform.hpp"
#include "nsmeta/nstf.hpp"
#include "nsmeta/parallel.hpp"
#include "nsmeta/training.hpp"
#include "nsmeta/verify.hpp"
#include "nsmeta/wavelets.hpp"

#ifndef NSMETA_GIT_DESCRIBE
#define NSMETA_GIT_DESCRIBE "unknown"
#endif

using namespace nsmeta;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDivergence = 4, kVerify = 5 };

using Clock = std::chrono::steady_clock;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir);
}

class RunRecord {
 public:
  RunRecord(std::string command, int argc, char** argv) : t0_(Clock::now()) {
    j_["command"] = std::move(command);
    Json args = Json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    j_["argv"] = args;
    j_["git_describe"] = NSMETA_GIT_DESCRIBE;
    j_["started_utc"] = utc_now();
  }
  Json& operator[](const char* key) { return j_[key]; }
  void write(const std::string& dir) {
    j_["wall_seconds"] = std::chrono::duration<double>(Clock::now() - t0_).count();
    write_text(fs::path(dir) / "run.json", j_.dump(2) + "\n");
  }

 private:
  Json j_;
  Clock::time_point t0_;
};

Json resolve(const Common& c) {
  if (c.config.empty()) return resolve_config(Json::object(), c.sets);
  return load_config(c.config, c.sets);
}

// Config for commands that consume a dataset: --config if given, else the
// dataset's own config; the problem section must match the data.
Json config_for_data(const Common& c, const Dataset& d) {
  Json cfg = c.config.empty() ? resolve_config(d.meta.at("config"), c.sets) : resolve(c);
  const Json& data_cfg = d.meta.at("config");
  if (cfg.at("problem") != data_cfg.at("problem"))
    throw ConfigError("config problem section does not match the dataset");
  if (cfg.at("data").at("n_f") != data_cfg.at("data").at("n_f"))
    throw ConfigError("config data.n_f does not match the dataset");
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool config = true) {
  if (config) {
    app->add_option("--config", c.config, "JSON run configuration (presets under configs/)");
    app->add_option("--set", c.sets, "Override a config value, e.g. --set model.alpha=7 (repeatable)");
  }
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores); results do not depend on it")
      ->check(CLI::NonNegativeNumber);
}

// ------------------------------------------------------------- commands

int cmd_gen_data(const Common& c, RunRecord& run) {
  Json cfg = resolve(c);
  if (c.seed) cfg["data"]["seed"] = *c.seed;
  const std::uint64_t seed = cfg["data"]["seed"].get<std::uint64_t>();
  ensure_dir(c.out);
  const Dataset d = generate_dataset(cfg, seed, c.threads);
  save_dataset(d, c.out);
  run["config"] = cfg;
  run["seeds"] = {{"data", seed}};
  run["threads"] = resolve_threads(c.threads);
  run["max_residual"] = d.meta["max_residual"];
  run["resamples"] = d.meta["resamples"];
  run.write(c.out);
  std::cout << "wrote " << d.train.samples() << " train and " << d.test.samples() << " test samples to " << c.out
            << " (max residual " << d.meta["max_residual"].get<double>() << ")\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_dir, int log_every, RunRecord& run) {
  const Dataset d = load_dataset(data_dir, true, c.threads);
  Json cfg = config_for_data(c, d);
  if (c.seed) {
    cfg["train"]["seed"] = *c.seed;
    cfg["model"]["seed"] = *c.seed;
  }
  const RunConfig rc = parse_config(cfg);
  ensure_dir(c.out);
  MetaModel model(fit_model_config(rc, d.train));
  TrainOptions opt = train_options(rc.train, c.threads);
  opt.on_epoch = [&](const EpochRecord& r) {
    if (log_every > 0 && r.epoch % log_every == 0)
      std::cerr << "epoch " << r.epoch << "  loss " << r.loss << "  train eps " << r.train_eps << "  test eps "
                << r.test_eps << "  " << r.seconds << " s\n";
  };
  const Metrics m = train(model, d.train, &d.test, opt);
  save_checkpoint(model, c.out);
  Json mj = metrics_to_json(m);
  mj["parameters"] = model.parameter_count();
  write_text(fs::path(c.out) / "metrics.json", mj.dump(2) + "\n");
  write_text(fs::path(c.out) / "curve.csv", history_csv(m.history));
  run["config"] = cfg;
  run["data"] = data_dir;
  run["seeds"] = {{"data", d.meta["seed"]}, {"model", rc.model.seed}, {"train", rc.train.seed}};
  run["threads"] = resolve_threads(c.threads);
  run["model"] = describe(model.config());
  run["optimizer"] = {{"name", "nadam"},
                      {"learning_rate", rc.train.learning_rate},
                      {"beta1", NadamOptions{}.beta1},
                      {"beta2", NadamOptions{}.beta2},
                      {"epsilon", NadamOptions{}.epsilon},
                      {"schedule_decay", NadamOptions{}.schedule_decay}};
  run.write(c.out);
  std::cout << "train eps " << m.train_eps << "  test eps " << m.test_eps << "  epochs " << m.epochs << " ("
            << m.stop_reason << ", best " << m.best_epoch << ")  " << m.wall_seconds << " s\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& model_dir, const std::string& data_dir, RunRecord& run) {
  const Dataset d = load_dataset(data_dir, true, c.threads);
  const Json cfg = config_for_data(c, d);
  const RunConfig rc = parse_config(cfg);
  const MetaModel model = load_checkpoint(model_dir);
  if (model.config().grid_points() != d.train.points()) throw ConfigError("model grid does not match the dataset");
  ensure_dir(c.out);
  const auto t0 = Clock::now();
  Metrics m;
  const auto train_err = relative_errors(model, d.train, c.threads);
  const auto test_err = relative_errors(model, d.test, c.threads);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  m.train_eps = mean(train_err);
  m.test_eps = mean(test_err);
  const std::size_t k = std::min(rc.eval.op_samples, d.test.eta.size());
  const std::vector<std::vector<double>> etas(d.test.eta.begin(), d.test.eta.begin() + static_cast<std::ptrdiff_t>(k));
  const auto op = operator_error(model, rc.problem, etas, rc.eval, c.threads);
  m.op_error = k > 0 ? op.mean : std::numeric_limits<double>::quiet_NaN();
  m.op_samples = k;
  m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  m.stop_reason = "eval";
  Json mj = metrics_to_json(m);
  mj["op_error_per_sample"] = op.per_sample;
  write_text(fs::path(c.out) / "metrics.json", mj.dump(2) + "\n");
  std::ostringstream csv;
  csv << std::setprecision(17) << "split,eta_index,source,rel_error\n";
  for (const SampleSet* s : {&d.train, &d.test}) {
    const auto& err = s == &d.train ? train_err : test_err;
    for (std::size_t i = 0; i < err.size(); ++i)
      csv << s->split << ',' << s->index[s->eta_of(i)] << ',' << i % s->n_f << ',' << err[i] << '\n';
  }
  write_text(fs::path(c.out) / "errors.csv", csv.str());
  run["config"] = cfg;
  run["model"] = model_dir;
  run["data"] = data_dir;
  run["seeds"] = {{"data", d.meta["seed"]}, {"model", model.config().seed}};
  run["threads"] = resolve_threads(c.threads);
  run.write(c.out);
  std::cout << "train eps " << m.train_eps << "  test eps " << m.test_eps << "  op error " << m.op_error << " ("
            << k << " eta)\n";
  return kOk;
}

int cmd_export(const Common& c, const std::string& model_dir, const std::string& data_dir, const std::string& split,
               std::size_t index, bool with_reference, RunRecord& run) {
  const Dataset d = load_dataset(data_dir, false, c.threads);
  const SampleSet& s = split == "train" ? d.train : d.test;
  if (index >= s.eta.size()) throw ConfigError("--index out of range for the " + split + " split");
  const MetaModel model = load_checkpoint(model_dir);
  if (model.config().grid_points() != s.points()) throw ConfigError("model grid does not match the dataset");
  ensure_dir(c.out);
  const Eigen::MatrixXd g = model.export_operator(model.make_eta_tensor(s.eta[index]));
  const auto n = static_cast<std::uint64_t>(g.rows());
  // row-major payload: entry (i, j) at i * n + j
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = g;
  std::vector<NamedTensor> entries{{"G_nn", {n, n}, std::vector<double>(rm.data(), rm.data() + rm.size())},
                                   {"eta", {n}, s.eta[index]}};
  if (with_reference) {
    const RunConfig rc = parse_config(resolve_config(d.meta.at("config")));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ref =
        ReferenceSolver(rc.problem, s.eta[index]).green();
    entries.push_back({"G_ref", {n, n}, std::vector<double>(ref.data(), ref.data() + ref.size())});
  }
  write_nstf((fs::path(c.out) / "operator.nstf").string(), entries);
  run["model"] = model_dir;
  run["data"] = data_dir;
  run["split"] = split;
  run["eta_index"] = s.index[index];
  run.write(c.out);
  std::cout << "wrote " << n << " x " << n << " operator to " << (fs::path(c.out) / "operator.nstf").string() << "\n";
  return kOk;
}

int cmd_verify(const Common& c, RunRecord& run) {
  const bool keep = !c.out.empty();
  const fs::path scratch = keep ? fs::path(c.out) / "scratch" : fs::temp_directory_path() / "nsmeta_verify";
  if (keep) ensure_dir(c.out);
  const auto results = run_verify_suites(scratch.string(), c.threads);
  std::cout << format_results(results);
  bool ok = true;
  Json table = Json::array();
  for (const auto& r : results) {
    ok = ok && r.passed();
    Json probes = Json::array();
    for (const auto& p : r.probes)
      probes.push_back({{"label", p.label}, {"value", p.value}, {"tolerance", p.tolerance}, {"passed", p.passed}});
    table.push_back({{"name", r.name}, {"passed", r.passed()}, {"seconds", r.seconds}, {"probes", probes}});
  }
  std::cout << (ok ? "all oracle suites passed\n" : "oracle suites FAILED\n");
  if (keep) {
    write_text(fs::path(c.out) / "verify.json", table.dump(2) + "\n");
    run["passed"] = ok;
    run.write(c.out);
  } else {
    std::error_code ec;
    fs::remove_all(scratch, ec);
  }
  return ok ? kOk : kVerify;
}

int cmd_bench(const Common& c, int max_L, int nb, RunRecord& run) {
  // time per matvec: dense, banded nonstandard form, full model forward
  const auto& f = daubechies_filter(3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Json rows = Json::array();
  std::printf("%8s %14s %14s %14s %12s\n", "N", "dense (us)", "nsform (us)", "model (us)", "ns nnz");
  for (int L = 6; L <= max_L; ++L) {
    const Eigen::Index n = Eigen::Index{1} << L;
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) a(i, j) = 1.0 / (1.0 + std::abs(static_cast<double>(i - j)));
    const auto ns = truncate(build_nonstandard(a, f, 3), nb);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = normal(rng);
    auto time_us = [](auto&& fn) {
      int reps = 1;
      while (true) {
        const auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) fn();
        const double s = std::chrono::duration<double>(Clock::now() - t0).count();
        if (s > 0.2 || reps >= (1 << 20)) return 1e6 * s / reps;
        reps *= 2;
      }
    };
    volatile double sink = 0.0;
    const Eigen::Map<const Eigen::VectorXd> vv(v.data(), n);
    const double dense = time_us([&] { sink = sink + (a * vv)(0); });
    const double band = time_us([&] { sink = sink + apply(ns, v, f)[0]; });
    ModelConfig mc;
    mc.L = L;
    mc.nb = nb;
    const MetaModel model(mc);
    std::vector<double> eta(v.size(), 1.0);
    const Tensor et = model.make_eta_tensor(eta), ft = model.make_eta_tensor(v);
    const double net = time_us([&] { sink = sink + model.forward(et, ft)[0]; });
    std::size_t nnz = static_cast<std::size_t>(ns.coarse.size());
    for (const auto& lv : ns.levels) nnz += lv.d1.values.size() + lv.d2.values.size() + lv.d3.values.size();
    std::printf("%8lld %14.2f %14.2f %14.2f %12zu\n", static_cast<long long>(n), dense, band, net, nnz);
    rows.push_back({{"N", n}, {"dense_us", dense}, {"nsform_us", band}, {"model_us", net}, {"nsform_nnz", nnz}});
  }
  if (!c.out.empty()) {
    ensure_dir(c.out);
    write_text(fs::path(c.out) / "bench.json", rows.dump(2) + "\n");
    run["nb"] = nb;
    run.write(c.out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nsmeta: meta-learning of pseudo-differential operators in nonstandard wavelet form"};
  app.require_subcommand(1);

  Common gen, tr, ev, ex, ve, be;
  std::string train_data, eval_model, eval_data, ex_model, ex_data, ex_split = "test";
  std::size_t ex_index = 0;
  bool ex_ref = false;
  int log_every = 10, bench_L = 11, bench_nb = 3;

  auto* g = app.add_subcommand("gen-data", "Generate and certify a dataset (train.nstf, test.nstf, dataset.json)");
  add_common(g, gen);
  g->add_option("--seed", gen.seed, "Dataset seed (overrides data.seed)");

  auto* t = app.add_subcommand("train", "Train a model on a dataset (checkpoint, metrics.json, curve.csv)");
  add_common(t, tr);
  t->add_option("--data", train_data, "Dataset directory from gen-data")->required();
  t->add_option("--seed", tr.seed, "Model and shuffling seed (overrides model.seed and train.seed)");
  t->add_option("--log-every", log_every, "Print progress every N epochs (0 = quiet)");

  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint (metrics.json with eps and operator error, errors.csv)");
  add_common(e, ev);
  e->add_option("--model", eval_model, "Checkpoint directory from train")->required();
  e->add_option("--data", eval_data, "Dataset directory")->required();

  auto* x = app.add_subcommand("export-op", "Write the dense model operator for one eta to operator.nstf");
  add_common(x, ex, false);
  x->add_option("--model", ex_model, "Checkpoint directory")->required();
  x->add_option("--data", ex_data, "Dataset directory")->required();
  x->add_option("--split", ex_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  x->add_option("--index", ex_index, "Eta position within the split");
  x->add_flag("--reference", ex_ref, "Also write the reference operator G_ref");

  auto* v = app.add_subcommand("verify", "Run the oracle suites and print a pass/fail table");
  add_common(v, ve, false);

  auto* b = app.add_subcommand("bench", "Matvec timing table: dense vs nonstandard form vs model");
  add_common(b, be, false);
  b->add_option("--max-level", bench_L, "Largest grid 2^L")->check(CLI::Range(6, 14));
  b->add_option("--nb", bench_nb, "Band half-width")->check(CLI::Range(0, 64));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*g) {
      RunRecord run("gen-data", argc, argv);
      return cmd_gen_data(gen, run);
    }
    if (*t) {
      RunRecord run("train", argc, argv);
      return cmd_train(tr, train_data, log_every, run);
    }
    if (*e) {
      RunRecord run("eval", argc, argv);
      return cmd_eval(ev, eval_model, eval_data, run);
    }
    if (*x) {
      RunRecord run("export-op", argc, argv);
      return cmd_export(ex, ex_model, ex_data, ex_split, ex_index, ex_ref, run);
    }
    if (*v) {
      RunRecord run("verify", argc, argv);
      return cmd_verify(ve, run);
    }
    if (*b) {
      RunRecord run("bench", argc, argv);
      return cmd_bench(be, bench_L, bench_nb, run);
    }
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const TrainingError& err) {
    std::cerr << "training diverged: " << err.what() << "\n";
    return kDivergence;
  } catch (const InferenceError& err) {
    std::cerr << "training diverged: " << err.what() << "\n";
    return kDivergence;
  } catch (const Error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const Json::exception& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kOther;
  }
  return kOther;
}
