#include "nsmeta/config.hpp"

#include <algorithm>
#include <fstream>

#include "nsmeta/errors.hpp"
#include "nsmeta/wavelets.hpp"

namespace nsmeta {

namespace {

void merge_into(Json& base, const Json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError("config: " + (where.empty() ? "document" : where) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key " + key);
    Json& slot = base[it.key()];
    const Json& v = it.value();
    if (slot.is_object()) {
      merge_into(slot, v, key);
    } else if (slot.is_null() || slot.is_number()) {
      // null defaults mean "derive from data"; they accept numbers or null
      if (!v.is_number() && !v.is_null()) throw ConfigError("config: " + key + " must be a number");
      slot = v;
    } else if (slot.type() != v.type()) {
      throw ConfigError("config: " + key + " has the wrong type");
    } else {
      slot = v;
    }
  }
}

void apply_override(Json& doc, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + text);
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override has an empty key: " + text);
    if (!node->is_object()) throw ConfigError("override path is not an object: " + path);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

template <class T>
T get_uint(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config: ") + key + " must be a nonnegative integer");
  return static_cast<T>(v.get<unsigned long long>());
}

int get_int(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(std::string("config: ") + key + " must be an integer");
  return v.get<int>();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

Json default_config(Recipe recipe, std::size_t n) {
  const EtaOptions eta = default_eta_options(recipe, n);
  const RteOptions rte;
  const int dim = recipe_dim(recipe);
  const bool rte_problem = recipe == Recipe::rte1d || recipe == Recipe::rte2d;
  const int p = 3;
  int L = is_power_of_two(n) ? exact_log2(n) : 0;
  const int L0 = std::max(min_coarse_level(p), L - (dim == 1 ? 6 : 4));

  Json d;
  d["problem"] = {{"recipe", recipe_name(recipe)},
                  {"n", n},
                  {"coarse", eta.coarse},
                  {"scale", eta.scale},
                  {"shift", eta.shift},
                  {"n_in", eta.n_in},
                  {"eta_max", eta.eta_max},
                  {"path_points", rte.path_points},
                  {"exact_path_1d", rte.exact_path_1d},
                  {"cell_points", rte.cell_points},
                  {"max_radius", rte.max_radius}};
  d["data"] = {{"n_eta", 500}, {"n_f", 5}, {"seed", 0}, {"max_resample", 100}, {"residual_tol", 1e-10}};
  d["model"] = {{"L0", L0},
                {"p", p},
                {"alpha", 5},
                {"K", 5},
                {"nb", dim == 1 ? 3 : 1},
                {"padding", rte_problem ? "zero" : "periodic"},
                {"symmetric", !rte_problem},
                {"init_noise", 1e-2},
                {"seed", 0},
                {"eta_shift", nullptr},
                {"eta_scale", nullptr},
                {"output_scale", nullptr}};
  d["train"] = {{"learning_rate", dim == 1 ? 1e-3 : 1e-4},
                {"batch_fraction", 0.01},
                {"max_epochs", 5000},
                {"patience", 50},
                {"min_improvement", 0.01},
                {"max_seconds", 0.0},
                {"seed", 0}};
  d["eval"] = {{"op_samples", dim == 1 ? 100 : 10}, {"power_tol", 1e-8}, {"power_restarts", 3}};
  return d;
}

Json resolve_config(Json user, const std::vector<std::string>& overrides) {
  if (user.is_null()) user = Json::object();
  if (!user.is_object()) throw ConfigError("config: document must be an object");
  for (const auto& o : overrides) apply_override(user, o);

  std::string recipe = "schrodinger1d";
  std::size_t n = 64;
  if (user.contains("problem") && user["problem"].is_object()) {
    const Json& pr = user["problem"];
    if (pr.contains("recipe")) {
      require(pr["recipe"].is_string(), "problem.recipe must be a string");
      recipe = pr["recipe"].get<std::string>();
    }
    if (pr.contains("n")) n = get_uint<std::size_t>(pr, "n");
  }
  Recipe r;
  try {
    r = parse_recipe(recipe);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  Json doc = default_config(r, n);
  merge_into(doc, user, "");
  parse_config(doc);  // validation
  return doc;
}

Json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  Json user = Json::parse(in, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
  return resolve_config(std::move(user), overrides);
}

RunConfig parse_config(const Json& doc) {
  RunConfig c;
  try {
    const Json& pr = doc.at("problem");
    c.problem.recipe = parse_recipe(pr.at("recipe").get<std::string>());
    EtaOptions& e = c.problem.eta;
    e.recipe = c.problem.recipe;
    e.n = get_uint<std::size_t>(pr, "n");
    e.coarse = get_uint<std::size_t>(pr, "coarse");
    e.scale = pr.at("scale").get<double>();
    e.shift = pr.at("shift").get<double>();
    e.n_in = get_uint<std::size_t>(pr, "n_in");
    e.eta_max = pr.at("eta_max").get<double>();
    c.problem.rte.path_points = get_int(pr, "path_points");
    c.problem.rte.exact_path_1d = pr.at("exact_path_1d").get<bool>();
    c.problem.rte.cell_points = get_int(pr, "cell_points");
    c.problem.rte.max_radius = pr.at("max_radius").get<double>();

    require(is_power_of_two(e.n) && e.n >= 8, "problem.n must be a power of two >= 8");
    const std::size_t span = c.problem.is_rte() ? e.n_in : e.n;
    require(e.coarse >= 2 && e.coarse <= span, "problem.coarse must lie in [2, grid points]");
    require(e.scale > 0.0, "problem.scale must be positive");
    if (c.problem.is_rte()) {
      require(e.n_in >= 2 && e.n_in < e.n && (e.n - e.n_in) % 2 == 0,
              "problem.n_in must be below n with an even padding split");
      require(e.eta_max > 0.0, "problem.eta_max must be positive");
      require(c.problem.rte.path_points >= 2, "problem.path_points must be >= 2");
      require(c.problem.rte.cell_points >= 4, "problem.cell_points must be >= 4");
      require(c.problem.rte.max_radius > 0.0 && c.problem.rte.max_radius < 1.0,
              "problem.max_radius must lie in (0, 1)");
    }

    const Json& da = doc.at("data");
    c.data.n_eta = get_uint<std::size_t>(da, "n_eta");
    c.data.n_f = get_uint<std::size_t>(da, "n_f");
    c.data.seed = get_uint<std::uint64_t>(da, "seed");
    c.data.max_resample = get_int(da, "max_resample");
    c.data.residual_tol = da.at("residual_tol").get<double>();
    require(c.data.n_eta >= 2, "data.n_eta must be >= 2 (half train, half test)");
    require(c.data.n_f >= 1, "data.n_f must be >= 1");
    require(c.data.max_resample >= 0, "data.max_resample must be >= 0");
    require(c.data.residual_tol > 0.0, "data.residual_tol must be positive");

    const Json& mo = doc.at("model");
    ModelConfig& m = c.model;
    m.dim = c.problem.dim();
    m.L = exact_log2(e.n);
    m.L0 = get_int(mo, "L0");
    m.p = get_int(mo, "p");
    m.alpha = get_int(mo, "alpha");
    m.K = get_int(mo, "K");
    m.nb = get_int(mo, "nb");
    const std::string pad = mo.at("padding").get<std::string>();
    require(pad == "periodic" || pad == "zero", "model.padding must be periodic or zero");
    m.padding = pad == "zero" ? Padding::zero : Padding::periodic;
    m.symmetric = mo.at("symmetric").get<bool>();
    m.init_noise = mo.at("init_noise").get<double>();
    m.seed = get_uint<std::uint64_t>(mo, "seed");
    c.auto_eta_norm = mo.at("eta_shift").is_null() || mo.at("eta_scale").is_null();
    if (!mo.at("eta_shift").is_null()) m.eta_shift = mo.at("eta_shift").get<double>();
    if (!mo.at("eta_scale").is_null()) m.eta_scale = mo.at("eta_scale").get<double>();
    c.auto_output_scale = mo.at("output_scale").is_null();
    if (!c.auto_output_scale) m.output_scale = mo.at("output_scale").get<double>();
    validate(m);

    const Json& tr = doc.at("train");
    c.train.learning_rate = tr.at("learning_rate").get<double>();
    c.train.batch_fraction = tr.at("batch_fraction").get<double>();
    c.train.max_epochs = get_int(tr, "max_epochs");
    c.train.patience = get_int(tr, "patience");
    c.train.min_improvement = tr.at("min_improvement").get<double>();
    c.train.max_seconds = tr.at("max_seconds").get<double>();
    c.train.seed = get_uint<std::uint64_t>(tr, "seed");
    require(c.train.learning_rate > 0.0, "train.learning_rate must be positive");
    require(c.train.batch_fraction > 0.0 && c.train.batch_fraction <= 1.0, "train.batch_fraction must lie in (0, 1]");
    require(c.train.max_epochs >= 1, "train.max_epochs must be >= 1");
    require(c.train.patience >= 1, "train.patience must be >= 1");
    require(c.train.min_improvement >= 0.0 && c.train.min_improvement < 1.0,
            "train.min_improvement must lie in [0, 1)");
    require(c.train.max_seconds >= 0.0, "train.max_seconds must be >= 0");

    const Json& ev = doc.at("eval");
    c.eval.op_samples = get_uint<std::size_t>(ev, "op_samples");
    c.eval.power_tol = ev.at("power_tol").get<double>();
    c.eval.power_restarts = get_int(ev, "power_restarts");
    require(c.eval.power_tol > 0.0, "eval.power_tol must be positive");
    require(c.eval.power_restarts >= 1, "eval.power_restarts must be >= 1");
  } catch (const ConfigError&) {
    throw;
  } catch (const Json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const Error& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

}  // namespace nsmeta
