#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nsmeta/errors.hpp"
#include "nsmeta/nstf.hpp"
#include "nsmeta/parallel.hpp"
#include "nsmeta/training.hpp"
#include "nsmeta/wavelets.hpp"
#include "unit/test_util.hpp"

using namespace nsmeta;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nsmeta_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

Json small_config(const std::string& recipe, std::size_t n, std::size_t n_eta, std::size_t n_f) {
  Json c;
  c["problem"] = {{"recipe", recipe}, {"n", n}, {"coarse", 4}};
  c["data"] = {{"n_eta", n_eta}, {"n_f", n_f}};
  return resolve_config(c);
}

bool same_sets(const SampleSet& a, const SampleSet& b) {
  return a.index == b.index && a.eta == b.eta && a.f == b.f && a.u == b.u && a.n_f == b.n_f;
}

}  // namespace

TEST_CASE("nstf round trip and corruption") {
  std::vector<NamedTensor> e{{"a", {2, 3}, {1, 2, 3, 4, 5, -0.0}},
                             {"scalar", {}, {3.25}},
                             {"empty", {0}, {}},
                             {"nan", {2}, {std::nan(""), 1e-300}}};
  const std::string bytes = encode_nstf(e);
  CHECK(bytes.substr(0, 6) == std::string("NSTF1\0", 6));
  const auto back = decode_nstf(bytes);
  REQUIRE(back.size() == e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    CHECK(back[i].name == e[i].name);
    CHECK(back[i].dims == e[i].dims);
    REQUIRE(back[i].data.size() == e[i].data.size());
    CHECK(std::memcmp(back[i].data.data(), e[i].data.data(), e[i].data.size() * 8) == 0);
  }
  CHECK(encode_nstf(back) == bytes);
  CHECK(find_entry(back, "scalar").data[0] == 3.25);
  CHECK_THROWS_AS(find_entry(back, "missing"), DataError);

  CHECK_THROWS_AS(encode_nstf({{"bad", {2, 2}, {1, 2, 3}}}), ShapeError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_nstf(bad), DataError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    CHECK_THROWS_AS(decode_nstf(bytes.substr(0, cut)), DataError);
  CHECK_THROWS_AS(decode_nstf(bytes + "x"), DataError);
  // huge rank in the first entry header
  std::string rank = bytes;
  const std::uint64_t huge = 1000;
  std::memcpy(&rank[6 + 8 + 8 + 1], &huge, 8);
  CHECK_THROWS_AS(decode_nstf(rank), DataError);

  const fs::path dir = scratch_dir("nstf");
  write_nstf((dir / "x.nstf").string(), e);
  CHECK(slurp(dir / "x.nstf") == bytes);
  CHECK_THROWS_AS(read_nstf((dir / "missing.nstf").string()), DataError);
}

TEST_CASE("config defaults, merging and overrides") {
  const Json d = resolve_config(Json::object());
  const RunConfig c = parse_config(d);
  CHECK(c.problem.recipe == Recipe::schrodinger1d);
  CHECK(c.model.L == 6);
  CHECK(c.model.L0 == 3);
  CHECK(c.model.padding == Padding::periodic);
  CHECK(c.model.symmetric);
  CHECK(c.auto_output_scale);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.train.patience == 50);
  CHECK(c.train.max_epochs == 5000);
  CHECK(c.train.min_improvement == 0.01);

  const RunConfig r = parse_config(resolve_config({{"problem", {{"recipe", "rte2d"}, {"n", 32}}}}));
  CHECK(r.model.dim == 2);
  CHECK(r.model.padding == Padding::zero);
  CHECK_FALSE(r.model.symmetric);
  CHECK(r.model.nb == 1);
  CHECK(r.problem.eta.n_in == 28);
  CHECK(r.train.learning_rate == 1e-4);
  CHECK(r.eval.op_samples == 10);
  // full-scale 1D keeps six levels
  CHECK(parse_config(resolve_config({{"problem", {{"n", 512}}}})).model.L0 == 3);

  const RunConfig o = parse_config(resolve_config(
      Json::object(), {"model.alpha=7", "train.learning_rate=2e-3", "model.padding=zero", "model.output_scale=0.5"}));
  CHECK(o.model.alpha == 7);
  CHECK(o.train.learning_rate == 2e-3);
  CHECK(o.model.padding == Padding::zero);
  CHECK_FALSE(o.auto_output_scale);
  CHECK(o.model.output_scale == 0.5);
  // overrides also switch recipe-dependent defaults
  CHECK(parse_config(resolve_config(Json::object(), {"problem.recipe=divergence1d"})).problem.eta.shift == 0.5);

  CHECK_THROWS_AS(resolve_config({{"model", {{"alhpa", 3}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"extra", 1}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(Json::object(), {"train.lr=1"}), ConfigError);
  CHECK_THROWS_AS(resolve_config(Json::object(), {"novalue"}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"model", {{"alpha", "five"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"model", {{"alpha", 2.5}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"problem", {{"n", 48}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"problem", {{"recipe", "heat"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"train", {{"batch_fraction", 0.0}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"data", {{"n_eta", 1}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"problem", {{"coarse", 128}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(Json::array()), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  // the resolved document is a fixed point
  CHECK(resolve_config(d) == d);
}

TEST_CASE("batch size rule") {
  CHECK(batch_size(0.01, 1250) == 13);
  CHECK(batch_size(0.01, 1200) == 12);
  CHECK(batch_size(0.01, 50) == 1);
  CHECK(batch_size(0.01, 10) == 1);
  CHECK(batch_size(1.0, 7) == 7);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  for (int threads : {1, 3}) {
    std::vector<int> hit(100, 0);
    parallel_for(hit.size(), threads, [&](std::size_t i) { hit[i] += 1; });
    for (int h : hit) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, threads, [](std::size_t i) { if (i == 7) throw DataError("x"); }), DataError);
  }
}

TEST_CASE("dataset generation, persistence and certification") {
  const Json cfg = small_config("schrodinger1d", 16, 6, 2);
  const Dataset d = generate_dataset(cfg, 7, 1);
  CHECK(d.train.eta.size() == 3);
  CHECK(d.test.eta.size() == 3);
  CHECK(d.train.samples() == 6);
  CHECK(d.train.index == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(d.test.index == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(d.meta["max_residual"].get<double>() <= 1e-10);
  // every u solves its own system
  const RunConfig rc = parse_config(cfg);
  CHECK(max_residual(d.test, rc.problem) <= 1e-10);

  // thread count and repetition do not change the data
  CHECK(same_sets(generate_dataset(cfg, 7, 3).train, d.train));
  CHECK(same_sets(generate_dataset(cfg, 7, 1).test, d.test));
  CHECK_FALSE(same_sets(generate_dataset(cfg, 8, 1).train, d.train));

  const fs::path a = scratch_dir("data_a"), b = scratch_dir("data_b");
  save_dataset(d, a.string());
  save_dataset(generate_dataset(cfg, 7, 2), b.string());
  for (const char* name : {"train.nstf", "test.nstf", "dataset.json"}) CHECK(slurp(a / name) == slurp(b / name));

  const Dataset back = load_dataset(a.string());
  CHECK(same_sets(back.train, d.train));
  CHECK(same_sets(back.test, d.test));

  // flip an exponent bit of the last u value (the index entry takes the
  // final 53 bytes): the file still parses but fails certification
  std::string bytes = slurp(a / "test.nstf");
  bytes[bytes.size() - 54] ^= 0x01;
  spit(b / "test.nstf", bytes);
  CHECK_THROWS_AS(load_dataset(b.string()), DataError);
  CHECK_NOTHROW(load_dataset(b.string(), false));
  spit(b / "test.nstf", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_dataset(b.string(), false), DataError);
  fs::remove(b / "dataset.json");
  CHECK_THROWS_AS(load_dataset(b.string()), DataError);
}

TEST_CASE("dataset recipes") {
  const Dataset div = generate_dataset(small_config("divergence1d", 16, 2, 2), 1);
  for (const auto& f : div.train.f) {
    double mean = 0.0;
    for (double x : f) mean += x / 16.0;
    CHECK(std::abs(mean) < 1e-14);
  }
  const Json rte = small_config("rte1d", 32, 2, 2);
  const Dataset r = generate_dataset(rte, 1);
  const RunConfig rc = parse_config(rte);
  const auto mask = source_mask(rc.problem);
  for (const auto& f : r.train.f)
    for (std::size_t k = 0; k < f.size(); ++k) CHECK((mask[k] || f[k] == 0.0));
  for (const auto& u : r.test.u)
    for (double x : u) CHECK(x >= 0.0);
  CHECK(r.meta["resamples"].get<int>() == 0);

  // a radius bound no draw can meet exhausts the resampling budget
  Json strict = rte;
  strict["problem"]["max_radius"] = 1e-6;
  strict["data"]["max_resample"] = 2;
  CHECK_THROWS_AS(generate_dataset(strict, 1), DataError);
}

TEST_CASE("metrics json round trip is lossless") {
  Metrics m;
  m.train_eps = 0.1 / 3.0;
  m.test_eps = std::nextafter(0.02, 1.0);
  m.op_samples = 10;
  m.wall_seconds = 12.345678901234567;
  m.epochs = 3;
  m.best_epoch = 2;
  m.steps = 300;
  m.batch_size = 13;
  m.stop_reason = "plateau";
  for (int e = 1; e <= 3; ++e) m.history.push_back({e, 1.0 / (3.0 * e), 1.0 / 7.0, std::sqrt(2.0) / e, 0.1 * e});
  const Json j = metrics_to_json(m);
  const Metrics back = metrics_from_json(Json::parse(j.dump()));
  CHECK(back.train_eps == m.train_eps);
  CHECK(back.test_eps == m.test_eps);
  CHECK(std::isnan(back.op_error));
  CHECK(back.wall_seconds == m.wall_seconds);
  CHECK(back.stop_reason == m.stop_reason);
  REQUIRE(back.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.history[i].loss == m.history[i].loss);
    CHECK(back.history[i].test_eps == m.history[i].test_eps);
  }
  CHECK(metrics_to_json(back).dump() == j.dump());
  const std::string csv = history_csv(m.history);
  CHECK(csv.rfind("epoch,loss,train_eps,test_eps,seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("spectral norm by power iteration") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Eigen::MatrixXd a = testutil::random_matrix(40, 30, seed);
    CHECK(spectral_norm(a) == doctest::Approx(testutil::spectral_norm(a)).epsilon(1e-7));
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(5, 5);
  d.diagonal() << 1.0, 3.0, -4.0, 2.0, 0.5;
  CHECK(spectral_norm(d) == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(spectral_norm(Eigen::MatrixXd::Zero(4, 4)) == 0.0);
}

TEST_CASE("operator error vanishes when the model is the reference") {
  // constant eta gives a circulant G whose nonstandard diagonals do not vary
  // along the level, so output biases alone can carry them
  Json c;
  c["problem"] = {{"recipe", "schrodinger1d"}, {"n", 64}};
  c["model"] = {{"alpha", 1}, {"K", 1}, {"nb", 32}, {"output_scale", 0.01}};
  const RunConfig rc = parse_config(resolve_config(c));
  MetaModel m(rc.model);
  m.set_exact_wavelets();
  const std::vector<double> eta(64, 5.0);
  const Eigen::MatrixXd g = EllipticSolver(EllipticForm::schrodinger, eta, 1).green();
  const auto C = m.channels_from_form(build_nonstandard(g, daubechies_filter(3), 3));
  auto& store = m.parameters();
  for (int l = 3; l < 6; ++l) {
    const Tensor& t = C.levels[static_cast<std::size_t>(l - 3)];
    const std::size_t cols = t.channels(), rows = t.size() / cols;
    auto w = store.view(store.find("convnet." + std::to_string(l) + ".out.w"));
    std::fill(w.begin(), w.end(), 0.0);
    auto b = store.view(store.find("convnet." + std::to_string(l) + ".out.b"));
    for (std::size_t k = 0; k < cols; ++k) {
      for (std::size_t i = 1; i < rows; ++i) REQUIRE(std::abs(t[i * cols + k] - t[k]) < 1e-15);
      b[k] = t[k] / rc.model.output_scale;
    }
  }
  const auto err = operator_error(m, rc.problem, {eta}, rc.eval);
  CHECK(err.mean <= 1e-10);
}

TEST_CASE("operator error compares domain columns for the RTE") {
  // an untrained model still gives a finite error, and padding columns of
  // G_NN do not enter it
  const Json cfg = small_config("rte1d", 32, 2, 1);
  const RunConfig rc = parse_config(cfg);
  const Dataset d = generate_dataset(cfg, 3);
  MetaModel m(fit_model_config(rc, d.train));
  const double e1 = operator_error(m, rc.problem, d.test.eta, rc.eval).mean;
  CHECK(std::isfinite(e1));
  CHECK(e1 > 0.0);
  const double e2 = operator_error(m, rc.problem, d.test.eta, rc.eval, 2).mean;
  CHECK(e1 == e2);
}

TEST_CASE("training sanity") {
  SUBCASE("overfit a single sample") {
    Json c = small_config("schrodinger1d", 32, 2, 1);
    const RunConfig rc = parse_config(c);
    Dataset d = generate_dataset(c, 11);
    d.train.eta.resize(1);
    d.train.f.resize(1);
    d.train.u.resize(1);
    MetaModel m(fit_model_config(rc, d.train));
    TrainOptions o;
    o.max_steps = 2000;
    o.patience = 2000;
    o.min_improvement = 0.0;
    const Metrics mt = train(m, d.train, nullptr, o);
    CHECK(mt.steps <= 2000);
    CHECK(mt.train_eps <= 1e-3);
  }
  SUBCASE("zero targets give zero loss") {
    const Json c = small_config("schrodinger1d", 16, 2, 2);
    Dataset d = generate_dataset(c, 5);
    for (auto& f : d.train.f) std::fill(f.begin(), f.end(), 0.0);
    for (auto& u : d.train.u) std::fill(u.begin(), u.end(), 0.0);
    MetaModel m(parse_config(c).model);
    TrainOptions o;
    o.max_steps = 1;
    const Metrics mt = train(m, d.train, nullptr, o);
    CHECK(mt.history.at(0).loss == 0.0);
    CHECK(mt.train_eps == 0.0);
  }
  SUBCASE("warm start carries only the truncation error") {
    // exact filters and C from the true nonstandard form of G at alpha = 1
    const std::vector<double> eta = gen_eta(3, default_eta_options(Recipe::schrodinger1d, 64));
    const Eigen::MatrixXd g = EllipticSolver(EllipticForm::schrodinger, eta, 1).green();
    ModelConfig mc;
    mc.alpha = 1;
    mc.nb = 3;
    MetaModel m(mc);
    m.set_exact_wavelets();
    const auto& filt = daubechies_filter(3);
    const auto tr = truncate(build_nonstandard(g, filt, 3), 3);
    const auto C = m.effective_C(m.channels_from_form(tr));
    const Eigen::MatrixXd gt = assemble_dense(tr, filt);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto f = testutil::random_vector(64, 40 + s);
      const Eigen::Map<const Eigen::VectorXd> fv(f.data(), 64);
      const Eigen::VectorXd u = g * fv;
      const Tensor got = m.apply_C(C, m.make_eta_tensor(f));
      const double model_err = testutil::rel_error(got.data, std::vector<double>(u.data(), u.data() + 64));
      const double trunc_err = (u - gt * fv).norm() / u.norm();
      CHECK(trunc_err > 0.0);
      CHECK(model_err == doctest::Approx(trunc_err).epsilon(1e-8));
    }
  }
}

TEST_CASE("training is deterministic and restores the best epoch") {
  Json c = small_config("schrodinger1d", 16, 8, 2);
  c["model"]["alpha"] = 2;
  c["model"]["K"] = 2;
  c["train"]["batch_fraction"] = 0.25;
  const RunConfig rc = parse_config(resolve_config(c));
  const Dataset d = generate_dataset(resolve_config(c), 2);
  std::vector<double> params[2];
  Metrics runs[2];
  for (int r = 0; r < 2; ++r) {
    MetaModel m(fit_model_config(rc, d.train));
    TrainOptions o = train_options(rc.train, r + 1);
    o.max_epochs = 15;
    runs[r] = train(m, d.train, &d.test, o);
    params[r] = m.parameters().values();
    // the restored parameters reproduce the best recorded test error
    const auto& best = runs[r].history.at(static_cast<std::size_t>(runs[r].best_epoch - 1));
    CHECK(runs[r].test_eps == best.test_eps);
    for (const auto& h : runs[r].history) CHECK(runs[r].test_eps <= h.test_eps);
  }
  CHECK(params[0] == params[1]);
  CHECK(runs[0].steps == runs[1].steps);
  CHECK(runs[0].batch_size == 2);

  MetaModel m(fit_model_config(rc, d.train));
  m.parameters().values() = params[0];
  const auto e1 = relative_errors(m, d.test, 1);
  const auto e2 = relative_errors(m, d.test, 3);
  CHECK(e1 == e2);
  CHECK(relative_errors(m, d.test, 1) == e1);
}

TEST_CASE("checkpoint round trip") {
  Json c = small_config("rte1d", 32, 2, 1);
  const RunConfig rc = parse_config(c);
  ModelConfig mc = rc.model;
  mc.eta_shift = 0.1 / 3.0;
  mc.output_scale = std::sqrt(2.0);
  MetaModel m(mc);
  m.initialize(99);
  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(m, dir.string());
  const MetaModel back = load_checkpoint(dir.string());
  CHECK(back.parameters().values() == m.parameters().values());
  CHECK(describe(back.config()) == describe(m.config()));
  const auto eta = gen_eta(1, rc.problem.eta);
  const auto f = gen_source(2, rc.problem.eta);
  CHECK(back.forward(back.make_eta_tensor(eta), back.make_eta_tensor(f)).data ==
        m.forward(m.make_eta_tensor(eta), m.make_eta_tensor(f)).data);

  const fs::path other = scratch_dir("ckpt_other");
  ModelConfig wider = mc;
  wider.alpha = 3;
  save_checkpoint(MetaModel(wider), other.string());
  fs::copy_file(dir / "model.txt", other / "model.txt", fs::copy_options::overwrite_existing);
  CHECK_THROWS_AS(load_checkpoint(other.string()), DataError);
  CHECK_THROWS_AS(load_checkpoint((dir / "nope").string()), DataError);
}
