#include "nsmeta/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <type_traits>

#include "nsmeta/errors.hpp"
#include "nsmeta/wavelets.hpp"

namespace nsmeta {

namespace {

std::size_t shift_pixel(std::size_t pixel, const Offset2& o, std::size_t n, int dim) {
  const auto nn = static_cast<std::ptrdiff_t>(n);
  if (dim == 1) return static_cast<std::size_t>(wrap(static_cast<std::ptrdiff_t>(pixel) + o[0], nn));
  const auto k1 = static_cast<std::ptrdiff_t>(pixel / n);
  const auto k2 = static_cast<std::ptrdiff_t>(pixel % n);
  return static_cast<std::size_t>(wrap(k1 + o[0], nn) * nn + wrap(k2 + o[1], nn));
}

std::vector<Offset2> offsets_for(std::size_t n, std::optional<int> nb, int dim) {
  if (dim == 2) return band_offsets_2d(n, nb);
  std::vector<Offset2> out;
  for (int o : band_offsets(n, nb)) out.push_back({o, 0});
  return out;
}

bool same_residue(const Offset2& a, const Offset2& b, std::size_t n) {
  const auto nn = static_cast<std::ptrdiff_t>(n);
  return wrap(a[0] - b[0], nn) == 0 && wrap(a[1] - b[1], nn) == 0;
}

std::vector<std::size_t> negation_index(const std::vector<Offset2>& offs, std::size_t n) {
  std::vector<std::size_t> neg(offs.size());
  for (std::size_t j = 0; j < offs.size(); ++j) {
    const Offset2 target{-offs[j][0], -offs[j][1]};
    const auto it = std::find_if(offs.begin(), offs.end(),
                                 [&](const Offset2& o) { return same_residue(o, target, n); });
    if (it == offs.end()) throw ConfigError("offset set is not closed under negation");
    neg[j] = static_cast<std::size_t>(it - offs.begin());
  }
  return neg;
}

std::vector<std::size_t> shift_table(const std::vector<Offset2>& offs, std::size_t n,
                                     std::size_t pixels, int dim) {
  std::vector<std::size_t> t(pixels * offs.size());
  for (std::size_t k = 0; k < pixels; ++k)
    for (std::size_t j = 0; j < offs.size(); ++j) t[k * offs.size() + j] = shift_pixel(k, offs[j], n, dim);
  return t;
}

std::vector<std::size_t> spatial(std::size_t n, int dim, std::size_t channels) {
  if (dim == 2) return {n, n, channels};
  return {n, channels};
}

const char* padding_name(Padding p) { return p == Padding::zero ? "zero" : "periodic"; }

}  // namespace

void validate(const ModelConfig& c) {
  if (c.dim != 1 && c.dim != 2) throw ConfigError("model: dim must be 1 or 2");
  if (c.alpha < 1 || c.K < 1) throw ConfigError("model: alpha and K must be >= 1");
  if (c.nb < 0) throw ConfigError("model: nb must be >= 0");
  if (!(c.eta_scale > 0.0)) throw ConfigError("model: eta_scale must be positive");
  if (!(c.output_scale > 0.0)) throw ConfigError("model: output_scale must be positive");
  if (c.L > 14) throw ConfigError("model: L too large");
  check_levels(c.L, c.L0, daubechies_filter(c.p));
}

std::string describe(const ModelConfig& c) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "dim = " << c.dim << "\n"
    << "L = " << c.L << "\n"
    << "L0 = " << c.L0 << "\n"
    << "p = " << c.p << "\n"
    << "alpha = " << c.alpha << "\n"
    << "K = " << c.K << "\n"
    << "nb = " << c.nb << "\n"
    << "padding = " << padding_name(c.padding) << "\n"
    << "symmetric = " << (c.symmetric ? "true" : "false") << "\n"
    << "init_noise = " << c.init_noise << "\n"
    << "seed = " << c.seed << "\n"
    << "eta_shift = " << c.eta_shift << "\n"
    << "eta_scale = " << c.eta_scale << "\n"
    << "output_scale = " << c.output_scale << "\n";
  return s.str();
}

ModelConfig parse_descriptor(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '#') continue;
    if (eq == std::string::npos) throw DataError("descriptor: malformed line '" + line + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string& k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw DataError("descriptor: missing key " + k);
    return it->second;
  };
  ModelConfig c;
  try {
    c.dim = std::stoi(get("dim"));
    c.L = std::stoi(get("L"));
    c.L0 = std::stoi(get("L0"));
    c.p = std::stoi(get("p"));
    c.alpha = std::stoi(get("alpha"));
    c.K = std::stoi(get("K"));
    c.nb = std::stoi(get("nb"));
    const std::string pad = get("padding");
    if (pad != "zero" && pad != "periodic") throw DataError("descriptor: bad padding " + pad);
    c.padding = pad == "zero" ? Padding::zero : Padding::periodic;
    c.symmetric = get("symmetric") == "true";
    c.init_noise = std::stod(get("init_noise"));
    c.seed = std::stoull(get("seed"));
    c.eta_shift = std::stod(get("eta_shift"));
    c.eta_scale = std::stod(get("eta_scale"));
    c.output_scale = std::stod(get("output_scale"));
  } catch (const std::logic_error& e) {
    throw DataError(std::string("descriptor: bad value: ") + e.what());
  }
  if (kv.size() != 14) throw DataError("descriptor: unknown keys present");
  return c;
}

MetaModel::MetaModel(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  const int T = cfg_.types();
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const auto tw = static_cast<std::size_t>(2 * cfg_.p);

  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    LevelLayout lay;
    lay.n = std::size_t{1} << l;
    lay.pixels = cfg_.dim == 2 ? lay.n * lay.n : lay.n;
    lay.band = offsets_for(lay.n, cfg_.nb, cfg_.dim);
    lay.band_shift = shift_table(lay.band, lay.n, lay.pixels, cfg_.dim);
    lay.band_neg = negation_index(lay.band, lay.n);
    if (l == cfg_.L0) {
      lay.full = offsets_for(lay.n, std::nullopt, cfg_.dim);
      lay.full_shift = shift_table(lay.full, lay.n, lay.pixels, cfg_.dim);
      lay.full_neg = negation_index(lay.full, lay.n);
    }
    layouts_.push_back(std::move(lay));
  }

  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    NetLayers net;
    const int pools = cfg_.L - l;
    for (int k = 0; k < cfg_.K; ++k) {
      ConvSpec s;
      s.dim = cfg_.dim;
      s.window = 2 * cfg_.p;
      s.offset = cfg_.p - 1;
      s.c_in = k == 0 ? 1 : a;
      s.c_out = a;
      s.padding = cfg_.padding;
      s.activation = Activation::relu;
      net.convs.push_back(s);
      net.pools_after.push_back(k < pools ? 1 : 0);
    }
    if (pools > cfg_.K) net.pools_after.back() += pools - cfg_.K;
    ConvSpec out;
    out.dim = cfg_.dim;
    out.window = 2 * cfg_.p;
    out.offset = cfg_.p - 1;
    out.c_in = a;
    out.c_out = columns(l);
    out.padding = cfg_.padding;
    out.activation = Activation::linear;
    net.convs.push_back(out);
    net.pools_after.push_back(0);
    for (std::size_t k = 0; k < net.convs.size(); ++k) {
      const std::string base = "convnet." + std::to_string(l) + "." +
                               (k + 1 == net.convs.size() ? std::string("out") : "conv" + std::to_string(k));
      const auto& s = net.convs[k];
      const std::size_t taps = s.taps();
      net.weight_ids.push_back(params_.add(base + ".w", {taps, s.c_in, s.c_out}));
      net.bias_ids.push_back(params_.add(base + ".b", {s.c_out}));
    }
    nets_.push_back(std::move(net));
  }

  const std::size_t ftaps = cfg_.dim == 2 ? tw * tw : tw;
  const auto ip = static_cast<std::size_t>(cfg_.p);
  const std::size_t itaps = cfg_.dim == 2 ? ip * ip : ip;
  for (int l = cfg_.L0; l < cfg_.L; ++l)
    fwt_ids_.push_back(params_.add("fwt." + std::to_string(l) + ".w", {ftaps, a, T * a}));
  if (!cfg_.symmetric)
    for (int l = cfg_.L0; l < cfg_.L; ++l)
      iwt_ids_.push_back(params_.add("iwt." + std::to_string(l) + ".w", {itaps, T * a, T * a}));

  initialize(cfg_.seed);
}

std::size_t MetaModel::columns(int level) const {
  const auto& lay = layouts_.at(static_cast<std::size_t>(level - cfg_.L0));
  std::size_t n = static_cast<std::size_t>(cfg_.blocks() * cfg_.alpha) * lay.band.size();
  if (level == cfg_.L0) n += static_cast<std::size_t>(cfg_.alpha) * lay.full.size();
  return n;
}

std::vector<ChannelColumn> MetaModel::layout(int level) const {
  const auto& lay = layouts_.at(static_cast<std::size_t>(level - cfg_.L0));
  std::vector<ChannelColumn> cols;
  for (int b = 0; b < cfg_.blocks(); ++b)
    for (int c = 0; c < cfg_.alpha; ++c)
      for (const auto& o : lay.band) cols.push_back({b, c, o, false});
  if (level == cfg_.L0)
    for (int c = 0; c < cfg_.alpha; ++c)
      for (const auto& o : lay.full) cols.push_back({-1, c, o, true});
  return cols;
}

std::size_t MetaModel::band_col(int block, int channel, std::size_t j, const LevelLayout& lay) const {
  return static_cast<std::size_t>(block * cfg_.alpha + channel) * lay.band.size() + j;
}

std::size_t MetaModel::coarse_col(int channel, std::size_t j, const LevelLayout& lay) const {
  return static_cast<std::size_t>(cfg_.blocks() * cfg_.alpha) * lay.band.size() +
         static_cast<std::size_t>(channel) * lay.full.size() + j;
}

ConvSpec MetaModel::fwt_spec() const {
  ConvSpec s;
  s.dim = cfg_.dim;
  s.window = 2 * cfg_.p;
  s.stride = 2;
  s.offset = 0;
  s.c_in = static_cast<std::size_t>(cfg_.alpha);
  s.c_out = static_cast<std::size_t>(cfg_.types() * cfg_.alpha);
  s.bias = false;
  return s;
}

ConvSpec MetaModel::iwt_spec() const {
  ConvSpec s;
  s.dim = cfg_.dim;
  s.window = cfg_.p;
  s.stride = 1;
  s.offset = cfg_.p - 1;
  s.c_in = static_cast<std::size_t>(cfg_.types() * cfg_.alpha);
  s.c_out = s.c_in;
  s.bias = false;
  return s;
}

void MetaModel::set_exact_fwt(std::span<double> w) const {
  const auto& f = daubechies_filter(cfg_.p);
  const int tw = 2 * cfg_.p;
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t co = static_cast<std::size_t>(cfg_.types()) * a;
  std::fill(w.begin(), w.end(), 0.0);
  for (int t = 0; t < cfg_.types(); ++t) {
    // 1D: t = 0 wavelet, 1 scaling. 2D: w1 = h x g, w2 = g x h, w3 = g x g, s = h x h.
    const std::vector<double>* f1;
    const std::vector<double>* f2 = nullptr;
    if (cfg_.dim == 1) {
      f1 = t == 0 ? &f.g : &f.h;
    } else {
      f1 = (t == 1 || t == 2) ? &f.g : &f.h;
      f2 = (t == 0 || t == 2) ? &f.g : &f.h;
    }
    const int w2 = cfg_.dim == 2 ? tw : 1;
    for (int k1 = 0; k1 < tw; ++k1)
      for (int k2 = 0; k2 < w2; ++k2) {
        const double v = (*f1)[k1] * (f2 ? (*f2)[k2] : 1.0);
        const auto tap = static_cast<std::size_t>(k1 * w2 + k2);
        for (std::size_t c = 0; c < a; ++c) w[(tap * a + c) * co + static_cast<std::size_t>(t) * a + c] = v;
      }
  }
}

// Adjoint of the stride-2 FWT expressed as a window-p conv followed by
// depth_to_space: Wi[j][q][r*a + c] = Wf[2(p-1-j) + r][c][q] per dimension.
void MetaModel::fwt_to_iwt(std::span<const double> wf, std::span<double> wi) const {
  const int p = cfg_.p, tw = 2 * p;
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t q_n = static_cast<std::size_t>(cfg_.types()) * a;
  const bool two = cfg_.dim == 2;
  const int jmax2 = two ? p : 1, rmax2 = two ? 2 : 1;
  std::fill(wi.begin(), wi.end(), 0.0);
  for (int j1 = 0; j1 < p; ++j1)
    for (int j2 = 0; j2 < jmax2; ++j2)
      for (int r1 = 0; r1 < 2; ++r1)
        for (int r2 = 0; r2 < rmax2; ++r2) {
          const auto itap = static_cast<std::size_t>(j1 * jmax2 + j2);
          const int k1 = 2 * (p - 1 - j1) + r1;
          const int k2 = two ? 2 * (p - 1 - j2) + r2 : 0;
          const auto ftap = static_cast<std::size_t>(two ? k1 * tw + k2 : k1);
          const auto r = static_cast<std::size_t>(r1 * rmax2 + r2);
          for (std::size_t c = 0; c < a; ++c)
            for (std::size_t q = 0; q < q_n; ++q)
              wi[(itap * q_n + q) * q_n + r * a + c] = wf[(ftap * a + c) * q_n + q];
        }
}

void MetaModel::iwt_to_fwt_grad(std::span<const double> gwi, std::span<double> gwf) const {
  const int p = cfg_.p, tw = 2 * p;
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t q_n = static_cast<std::size_t>(cfg_.types()) * a;
  const bool two = cfg_.dim == 2;
  const int jmax2 = two ? p : 1, rmax2 = two ? 2 : 1;
  for (int j1 = 0; j1 < p; ++j1)
    for (int j2 = 0; j2 < jmax2; ++j2)
      for (int r1 = 0; r1 < 2; ++r1)
        for (int r2 = 0; r2 < rmax2; ++r2) {
          const auto itap = static_cast<std::size_t>(j1 * jmax2 + j2);
          const int k1 = 2 * (p - 1 - j1) + r1;
          const int k2 = two ? 2 * (p - 1 - j2) + r2 : 0;
          const auto ftap = static_cast<std::size_t>(two ? k1 * tw + k2 : k1);
          const auto r = static_cast<std::size_t>(r1 * rmax2 + r2);
          for (std::size_t c = 0; c < a; ++c)
            for (std::size_t q = 0; q < q_n; ++q)
              gwf[(ftap * a + c) * q_n + q] += gwi[(itap * q_n + q) * q_n + r * a + c];
        }
}

void MetaModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& net : nets_)
    for (std::size_t k = 0; k < net.convs.size(); ++k) {
      const auto& s = net.convs[k];
      const double fan_in = static_cast<double>(s.taps() * s.c_in);
      init_normal(params_.view(net.weight_ids[k]), 1.0 / std::sqrt(fan_in), rng);
      auto b = params_.view(net.bias_ids[k]);
      std::fill(b.begin(), b.end(), 0.0);
    }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    auto wf = params_.view(fwt_id(l));
    set_exact_fwt(wf);
    if (cfg_.init_noise > 0.0)
      for (double& x : wf) x += cfg_.init_noise * noise(rng);
  }
  if (!cfg_.symmetric)
    for (int l = cfg_.L0; l < cfg_.L; ++l) {
      std::vector<double> exact(params_.view(fwt_id(l)).size());
      set_exact_fwt(exact);
      auto wi = params_.view(iwt_ids_[static_cast<std::size_t>(l - cfg_.L0)]);
      fwt_to_iwt(exact, wi);
      if (cfg_.init_noise > 0.0)
        for (double& x : wi) x += cfg_.init_noise * noise(rng);
    }
}

void MetaModel::set_exact_wavelets() {
  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    set_exact_fwt(params_.view(fwt_id(l)));
    if (!cfg_.symmetric) {
      std::vector<double> exact(params_.view(fwt_id(l)).begin(), params_.view(fwt_id(l)).end());
      fwt_to_iwt(exact, params_.view(iwt_ids_[static_cast<std::size_t>(l - cfg_.L0)]));
    }
  }
}

std::vector<double> MetaModel::iwt_weights(int level) const {
  const auto i = static_cast<std::size_t>(level - cfg_.L0);
  if (!cfg_.symmetric) {
    const auto w = params_.view(iwt_ids_.at(i));
    return {w.begin(), w.end()};
  }
  std::vector<double> wi(iwt_spec().weight_size());
  fwt_to_iwt(params_.view(fwt_id(level)), wi);
  return wi;
}

Tensor MetaModel::make_eta_tensor(std::span<const double> values) const {
  if (values.size() != cfg_.grid_points())
    throw ShapeError("model: eta has " + std::to_string(values.size()) + " points, expected " +
                     std::to_string(cfg_.grid_points()));
  return Tensor(spatial(cfg_.side(), cfg_.dim, 1), std::vector<double>(values.begin(), values.end()));
}

ChannelCollection MetaModel::zeros_like_C() const {
  ChannelCollection c;
  for (int l = cfg_.L0; l < cfg_.L; ++l)
    c.levels.emplace_back(spatial(std::size_t{1} << l, cfg_.dim, columns(l)));
  return c;
}

ChannelCollection MetaModel::eta_to_C(const Tensor& eta, EtaCache* cache) const {
  if (eta.shape != spatial(cfg_.side(), cfg_.dim, 1))
    throw ShapeError("eta_to_C: eta shape " + eta.shape_string() + " does not match the model grid");
  Tensor x = eta;
  for (double& v : x.data) v = (v - cfg_.eta_shift) / cfg_.eta_scale;

  ChannelCollection out;
  if (cache) {
    cache->convs.assign(nets_.size(), {});
    cache->pool_inputs.assign(nets_.size(), {});
  }
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    const auto& net = nets_[i];
    Tensor h = x;
    for (std::size_t k = 0; k < net.convs.size(); ++k) {
      ConvCache* cc = nullptr;
      if (cache) {
        cache->convs[i].emplace_back();
        cc = &cache->convs[i].back();
      }
      h = conv_forward(net.convs[k], params_.view(net.weight_ids[k]), params_.view(net.bias_ids[k]),
                       h, cc);
      for (int q = 0; q < net.pools_after[k]; ++q) {
        if (cache) cache->pool_inputs[i].push_back(h.shape);
        h = avgpool2_forward(h);
      }
    }
    for (double& v : h.data) v *= cfg_.output_scale;
    out.levels.push_back(std::move(h));
  }
  if (cache) cache->ready = true;
  return out;
}

void MetaModel::eta_backward(const EtaCache& cache, const ChannelCollection& grad_C,
                             std::span<double> grad) const {
  if (!cache.ready) throw StateError("eta_backward: forward pass was not recorded");
  if (grad_C.levels.size() != nets_.size()) throw ShapeError("eta_backward: level count mismatch");
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    const auto& net = nets_[i];
    Tensor g = grad_C.levels[i];
    for (double& v : g.data) v *= cfg_.output_scale;
    std::size_t pool = cache.pool_inputs[i].size();
    for (std::size_t k = net.convs.size(); k-- > 0;) {
      for (int q = 0; q < net.pools_after[k]; ++q) g = avgpool2_backward(g, cache.pool_inputs[i][--pool]);
      g = conv_backward(net.convs[k], params_.view(net.weight_ids[k]), cache.convs[i][k], g,
                        params_.view(net.weight_ids[k], grad), params_.view(net.bias_ids[k], grad));
    }
  }
}

ChannelCollection MetaModel::symmetrize(const ChannelCollection& in) const {
  ChannelCollection out = in;
  const int T = cfg_.types();
  for (std::size_t i = 0; i < layouts_.size(); ++i) {
    const auto& lay = layouts_[i];
    const Tensor& C = in.levels[i];
    Tensor& S = out.levels[i];
    const std::size_t nc = C.channels(), nd = lay.band.size();
    for (std::size_t k = 0; k < lay.pixels; ++k)
      for (int c = 0; c < cfg_.alpha; ++c) {
        for (int t = 0; t < T; ++t)
          for (int u = 0; u <= t; ++u) {
            if (t == T - 1 && u == T - 1) continue;
            const int b = t * T + u;
            const int b_up = u * T + t;
            for (std::size_t j = 0; j < nd; ++j) {
              const std::size_t k2 = lay.band_shift[k * nd + j];
              const double mirror = C[k2 * nc + band_col(b_up, c, lay.band_neg[j], lay)];
              const std::size_t col = band_col(b, c, j, lay);
              S[k * nc + col] = t == u ? 0.5 * C[k * nc + col] + 0.5 * mirror : mirror;
            }
          }
        if (!lay.full.empty()) {
          const std::size_t nf = lay.full.size();
          for (std::size_t j = 0; j < nf; ++j) {
            const std::size_t k2 = lay.full_shift[k * nf + j];
            const std::size_t col = coarse_col(c, j, lay);
            S[k * nc + col] = 0.5 * C[k * nc + col] + 0.5 * C[k2 * nc + coarse_col(c, lay.full_neg[j], lay)];
          }
        }
      }
  }
  return out;
}

ChannelCollection MetaModel::symmetrize_backward(const ChannelCollection& grad) const {
  ChannelCollection out = grad;
  const int T = cfg_.types();
  for (auto& t : out.levels) std::fill(t.data.begin(), t.data.end(), 0.0);
  for (std::size_t i = 0; i < layouts_.size(); ++i) {
    const auto& lay = layouts_[i];
    const Tensor& G = grad.levels[i];
    Tensor& R = out.levels[i];
    const std::size_t nc = G.channels(), nd = lay.band.size();
    for (std::size_t k = 0; k < lay.pixels; ++k)
      for (int c = 0; c < cfg_.alpha; ++c) {
        for (int t = 0; t < T; ++t)
          for (int u = 0; u < T; ++u) {
            if (t == T - 1 && u == T - 1) continue;
            const int b = t * T + u;
            for (std::size_t j = 0; j < nd; ++j) {
              const std::size_t col = band_col(b, c, j, lay);
              const double g = G[k * nc + col];
              if (t < u) {
                R[k * nc + col] += g;
                continue;
              }
              const std::size_t k2 = lay.band_shift[k * nd + j];
              const int b_up = u * T + t;
              const std::size_t mcol = band_col(b_up, c, lay.band_neg[j], lay);
              if (t == u) {
                R[k * nc + col] += 0.5 * g;
                R[k2 * nc + mcol] += 0.5 * g;
              } else {
                R[k2 * nc + mcol] += g;
              }
            }
          }
        if (!lay.full.empty()) {
          const std::size_t nf = lay.full.size();
          for (std::size_t j = 0; j < nf; ++j) {
            const std::size_t col = coarse_col(c, j, lay);
            const std::size_t k2 = lay.full_shift[k * nf + j];
            R[k * nc + col] += 0.5 * G[k * nc + col];
            R[k2 * nc + coarse_col(c, lay.full_neg[j], lay)] += 0.5 * G[k * nc + col];
          }
        }
      }
  }
  return out;
}

ChannelCollection MetaModel::effective_C(const ChannelCollection& raw) const {
  return cfg_.symmetric ? symmetrize(raw) : raw;
}

ChannelCollection MetaModel::effective_C_backward(const ChannelCollection& grad) const {
  return cfg_.symmetric ? symmetrize_backward(grad) : grad;
}

void MetaModel::band_forward(int level, const Tensor& C, const Tensor& z, Tensor& y) const {
  const auto& lay = layouts_[static_cast<std::size_t>(level - cfg_.L0)];
  const int T = cfg_.types();
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t nc = C.channels(), zc = z.channels(), nd = lay.band.size();
  for (std::size_t k = 0; k < lay.pixels; ++k) {
    const double* crow = &C.data[k * nc];
    const std::size_t* sh = &lay.band_shift[k * nd];
    for (int t = 0; t < T; ++t)
      for (int u = 0; u < T; ++u) {
        if (t == T - 1 && u == T - 1) continue;
        const int b = t * T + u;
        for (std::size_t c = 0; c < a; ++c) {
          const double* cc = crow + band_col(b, static_cast<int>(c), 0, lay);
          const std::size_t zoff = static_cast<std::size_t>(u) * a + c;
          double acc = 0.0;
          for (std::size_t j = 0; j < nd; ++j) acc += cc[j] * z.data[sh[j] * zc + zoff];
          y.data[k * zc + static_cast<std::size_t>(t) * a + c] += acc;
        }
      }
    if (!lay.full.empty()) {
      const std::size_t nf = lay.full.size();
      const std::size_t* fs = &lay.full_shift[k * nf];
      const std::size_t s_off = static_cast<std::size_t>(T - 1) * a;
      for (std::size_t c = 0; c < a; ++c) {
        const double* cc = crow + coarse_col(static_cast<int>(c), 0, lay);
        double acc = 0.0;
        for (std::size_t j = 0; j < nf; ++j) acc += cc[j] * z.data[fs[j] * zc + s_off + c];
        y.data[k * zc + s_off + c] += acc;
      }
    }
  }
}

void MetaModel::band_backward(int level, const Tensor& C, const Tensor& z, const Tensor& gy,
                              Tensor& gC, Tensor& gz) const {
  const auto& lay = layouts_[static_cast<std::size_t>(level - cfg_.L0)];
  const int T = cfg_.types();
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t nc = C.channels(), zc = z.channels(), nd = lay.band.size();
  for (std::size_t k = 0; k < lay.pixels; ++k) {
    const double* crow = &C.data[k * nc];
    double* gcrow = &gC.data[k * nc];
    const std::size_t* sh = &lay.band_shift[k * nd];
    for (int t = 0; t < T; ++t)
      for (int u = 0; u < T; ++u) {
        if (t == T - 1 && u == T - 1) continue;
        const int b = t * T + u;
        for (std::size_t c = 0; c < a; ++c) {
          const std::size_t col0 = band_col(b, static_cast<int>(c), 0, lay);
          const std::size_t zoff = static_cast<std::size_t>(u) * a + c;
          const double g = gy.data[k * zc + static_cast<std::size_t>(t) * a + c];
          for (std::size_t j = 0; j < nd; ++j) {
            gcrow[col0 + j] += g * z.data[sh[j] * zc + zoff];
            gz.data[sh[j] * zc + zoff] += g * crow[col0 + j];
          }
        }
      }
    if (!lay.full.empty()) {
      const std::size_t nf = lay.full.size();
      const std::size_t* fs = &lay.full_shift[k * nf];
      const std::size_t s_off = static_cast<std::size_t>(T - 1) * a;
      for (std::size_t c = 0; c < a; ++c) {
        const std::size_t col0 = coarse_col(static_cast<int>(c), 0, lay);
        const double g = gy.data[k * zc + s_off + c];
        for (std::size_t j = 0; j < nf; ++j) {
          gcrow[col0 + j] += g * z.data[fs[j] * zc + s_off + c];
          gz.data[fs[j] * zc + s_off + c] += g * crow[col0 + j];
        }
      }
    }
  }
}

Tensor MetaModel::apply_C(const ChannelCollection& C, const Tensor& f, FCache* cache) const {
  if (f.shape != spatial(cfg_.side(), cfg_.dim, 1))
    throw ShapeError("apply_C: f shape " + f.shape_string() + " does not match the model grid");
  if (C.levels.size() != layouts_.size()) throw ShapeError("apply_C: level count mismatch");
  for (int l = cfg_.L0; l < cfg_.L; ++l)
    if (C.levels[static_cast<std::size_t>(l - cfg_.L0)].shape !=
        spatial(std::size_t{1} << l, cfg_.dim, columns(l)))
      throw ShapeError("apply_C: C^(" + std::to_string(l) + ") has the wrong shape");

  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t s_off = static_cast<std::size_t>(cfg_.types() - 1) * a;
  const std::size_t nlev = layouts_.size();
  const ConvSpec fs = fwt_spec(), is = iwt_spec();

  std::vector<Tensor> z(nlev);
  if (cache) {
    cache->fwt.assign(nlev, {});
    cache->iwt.assign(nlev, {});
  }
  Tensor v = replicate_channels(f, a);
  for (int l = cfg_.L - 1; l >= cfg_.L0; --l) {
    const auto i = static_cast<std::size_t>(l - cfg_.L0);
    z[i] = conv_forward(fs, params_.view(fwt_id(l)), {}, v, cache ? &cache->fwt[i] : nullptr);
    v = slice_channels(z[i], s_off, a);
  }

  Tensor u(spatial(std::size_t{1} << cfg_.L0, cfg_.dim, a));
  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    const auto i = static_cast<std::size_t>(l - cfg_.L0);
    Tensor y(z[i].shape);
    band_forward(l, C.levels[i], z[i], y);
    add_into_channels(y, u, s_off);
    const auto wi = iwt_weights(l);
    u = depth_to_space(conv_forward(is, wi, {}, y, cache ? &cache->iwt[i] : nullptr));
  }
  if (cache) {
    cache->coeffs = std::move(z);
    cache->ready = true;
  }
  return channel_average(u);
}

ChannelCollection MetaModel::apply_C_backward(const ChannelCollection& C, const FCache& cache,
                                              const Tensor& grad_u, std::span<double> grad) const {
  if (!cache.ready) throw StateError("apply_C_backward: forward pass was not recorded");
  const auto a = static_cast<std::size_t>(cfg_.alpha);
  const std::size_t s_off = static_cast<std::size_t>(cfg_.types() - 1) * a;
  const std::size_t nlev = layouts_.size();
  const ConvSpec fs = fwt_spec(), is = iwt_spec();

  ChannelCollection gC = zeros_like_C();
  std::vector<Tensor> gz(nlev);
  Tensor gu = channel_average_backward(grad_u, a);
  for (int l = cfg_.L - 1; l >= cfg_.L0; --l) {
    const auto i = static_cast<std::size_t>(l - cfg_.L0);
    const auto wi = iwt_weights(l);
    std::vector<double> gwi(wi.size(), 0.0);
    const Tensor gy = conv_backward(is, wi, cache.iwt[i], space_to_depth(gu), gwi, {});
    if (cfg_.symmetric) {
      iwt_to_fwt_grad(gwi, params_.view(fwt_id(l), grad));
    } else {
      auto dst = params_.view(iwt_ids_[i], grad);
      for (std::size_t q = 0; q < gwi.size(); ++q) dst[q] += gwi[q];
    }
    gu = slice_channels(gy, s_off, a);
    gz[i] = Tensor(cache.coeffs[i].shape);
    band_backward(l, C.levels[i], cache.coeffs[i], gy, gC.levels[i], gz[i]);
  }

  Tensor gv;
  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    const auto i = static_cast<std::size_t>(l - cfg_.L0);
    if (l > cfg_.L0) add_into_channels(gz[i], gv, s_off);
    gv = conv_backward(fs, params_.view(fwt_id(l)), cache.fwt[i], gz[i], params_.view(fwt_id(l), grad),
                       {});
  }
  return gC;
}

Tensor MetaModel::forward(const Tensor& eta, const Tensor& f) const {
  const Tensor u = apply_C(effective_C(eta_to_C(eta)), f);
  if (!u.all_finite()) throw InferenceError("forward: non-finite output");
  return u;
}

Eigen::MatrixXd MetaModel::export_operator_C(const ChannelCollection& C) const {
  const std::size_t n = cfg_.grid_points();
  Eigen::MatrixXd g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Tensor e(spatial(cfg_.side(), cfg_.dim, 1));
  for (std::size_t j = 0; j < n; ++j) {
    e.data[j] = 1.0;
    const Tensor u = apply_C(C, e);
    e.data[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = u.data[i];
  }
  if (!g.allFinite()) throw InferenceError("export_operator: non-finite entries");
  return g;
}

Eigen::MatrixXd MetaModel::export_operator(const Tensor& eta) const {
  return export_operator_C(effective_C(eta_to_C(eta)));
}

namespace {

template <typename Block>
double lookup(const Block& b, std::size_t row, const Offset2& o, std::size_t n) {
  for (std::size_t j = 0; j < b.offsets.size(); ++j) {
    Offset2 bo;
    if constexpr (std::is_same_v<Block, BandedBlock>) {
      bo = {b.offsets[j], 0};
    } else {
      bo = b.offsets[j];
    }
    if (same_residue(bo, o, n)) return b.at(row, j);
  }
  return 0.0;
}

}  // namespace

ChannelCollection MetaModel::channels_from_form(const NonstandardForm& ns) const {
  if (cfg_.dim != 1 || ns.L != cfg_.L || ns.L0 != cfg_.L0 || ns.p != cfg_.p)
    throw ShapeError("channels_from_form: form does not match the model levels");
  ChannelCollection out = zeros_like_C();
  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    const auto i = static_cast<std::size_t>(l - cfg_.L0);
    const auto& lay = layouts_[i];
    const auto& lvl = ns.level(l);
    const BandedBlock* blocks[3] = {&lvl.d1, &lvl.d2, &lvl.d3};
    Tensor& C = out.levels[i];
    const std::size_t nc = C.channels();
    for (std::size_t k = 0; k < lay.pixels; ++k)
      for (int c = 0; c < cfg_.alpha; ++c) {
        for (int b = 0; b < 3; ++b)
          for (std::size_t j = 0; j < lay.band.size(); ++j)
            C[k * nc + band_col(b, c, j, lay)] = lookup(*blocks[b], k, lay.band[j], lay.n);
        for (std::size_t j = 0; j < lay.full.size(); ++j)
          C[k * nc + coarse_col(c, j, lay)] =
              ns.coarse(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(lay.full_shift[k * lay.full.size() + j]));
      }
  }
  return out;
}

ChannelCollection MetaModel::channels_from_form(const NonstandardForm2D& ns) const {
  if (cfg_.dim != 2 || ns.L != cfg_.L || ns.L0 != cfg_.L0 || ns.p != cfg_.p)
    throw ShapeError("channels_from_form: form does not match the model levels");
  ChannelCollection out = zeros_like_C();
  for (int l = cfg_.L0; l < cfg_.L; ++l) {
    const auto i = static_cast<std::size_t>(l - cfg_.L0);
    const auto& lay = layouts_[i];
    const auto& lvl = ns.level(l);
    Tensor& C = out.levels[i];
    const std::size_t nc = C.channels();
    for (std::size_t k = 0; k < lay.pixels; ++k)
      for (int c = 0; c < cfg_.alpha; ++c) {
        for (int b = 0; b < 15; ++b)
          for (std::size_t j = 0; j < lay.band.size(); ++j)
            C[k * nc + band_col(b, c, j, lay)] =
                lookup(lvl.blocks[static_cast<std::size_t>(b)], k, lay.band[j], lay.n);
        for (std::size_t j = 0; j < lay.full.size(); ++j)
          C[k * nc + coarse_col(c, j, lay)] =
              ns.coarse(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(lay.full_shift[k * lay.full.size() + j]));
      }
  }
  return out;
}

}  // namespace nsmeta
