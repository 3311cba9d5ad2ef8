#include "nsmeta/nsform.hpp"

#include <algorithm>
#include <sstream>

#include "nsmeta/errors.hpp"

namespace nsmeta {

std::vector<int> band_offsets(std::size_t n, std::optional<int> nb) {
  const auto ni = static_cast<int>(n);
  std::vector<int> out;
  if (nb && 2 * (*nb) + 1 <= ni) {
    for (int o = -*nb; o <= *nb; ++o) out.push_back(o);
  } else {
    for (int o = -((ni - 1) / 2); o <= ni / 2; ++o) out.push_back(o);
  }
  return out;
}

BandedBlock BandedBlock::from_dense(const Eigen::MatrixXd& m, std::vector<int> offsets) {
  if (m.rows() != m.cols()) throw ShapeError("BandedBlock::from_dense: matrix must be square");
  BandedBlock b;
  b.n = static_cast<std::size_t>(m.rows());
  b.offsets = std::move(offsets);
  b.values.assign(b.n * b.offsets.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(b.n);
  for (std::size_t k = 0; k < b.n; ++k)
    for (std::size_t j = 0; j < b.offsets.size(); ++j)
      b.at(k, j) = m(static_cast<Eigen::Index>(k),
                     wrap(static_cast<std::ptrdiff_t>(k) + b.offsets[j], n));
  return b;
}

Eigen::MatrixXd BandedBlock::to_dense() const {
  const auto nn = static_cast<std::ptrdiff_t>(n);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nn, nn);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < offsets.size(); ++j)
      m(static_cast<Eigen::Index>(k), wrap(static_cast<std::ptrdiff_t>(k) + offsets[j], nn)) +=
          at(k, j);
  return m;
}

void BandedBlock::multiply_add(std::span<const double> x, std::span<double> y) const {
  if (x.size() != n || y.size() != n) throw ShapeError("BandedBlock::multiply_add: size mismatch");
  const auto nn = static_cast<std::ptrdiff_t>(n);
  const std::size_t nd = offsets.size();
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    const double* row = values.data() + k * nd;
    for (std::size_t j = 0; j < nd; ++j)
      acc += row[j] * x[wrap(static_cast<std::ptrdiff_t>(k) + offsets[j], nn)];
    y[k] += acc;
  }
}

namespace {

// (W^(l))^T M W^(l) for a 2h x 2h matrix; rows/cols ordered (wavelet, scaling).
Eigen::MatrixXd two_sided_step(const Eigen::MatrixXd& m, const WaveletFilter& filter) {
  const Eigen::Index n = m.rows();
  const Eigen::Index h = n / 2;
  Eigen::MatrixXd left(n, n);
  Vector line(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) line[r] = m(r, c);
    const auto out = forward_step(line, filter);
    for (Eigen::Index r = 0; r < h; ++r) {
      left(r, c) = out.w[r];
      left(h + r, c) = out.s[r];
    }
  }
  Eigen::MatrixXd both(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) line[c] = left(r, c);
    const auto out = forward_step(line, filter);
    for (Eigen::Index c = 0; c < h; ++c) {
      both(r, c) = out.w[c];
      both(r, h + c) = out.s[c];
    }
  }
  return both;
}

}  // namespace

NonstandardForm build_nonstandard(const Eigen::MatrixXd& a, const WaveletFilter& filter, int L0) {
  if (a.rows() != a.cols()) throw ShapeError("build_nonstandard: matrix must be square");
  const int L = exact_log2(static_cast<std::size_t>(a.rows()));
  check_levels(L, L0, filter);

  NonstandardForm ns;
  ns.L = L;
  ns.L0 = L0;
  ns.p = filter.p;
  ns.levels.resize(static_cast<std::size_t>(L - L0));
  Eigen::MatrixXd current = a;
  for (int l = L - 1; l >= L0; --l) {
    const Eigen::MatrixXd b = two_sided_step(current, filter);
    const Eigen::Index h = b.rows() / 2;
    const auto offs = band_offsets(static_cast<std::size_t>(h), std::nullopt);
    auto& lvl = ns.levels[static_cast<std::size_t>(l - L0)];
    lvl.d1 = BandedBlock::from_dense(b.topLeftCorner(h, h), offs);
    lvl.d2 = BandedBlock::from_dense(b.topRightCorner(h, h), offs);
    lvl.d3 = BandedBlock::from_dense(b.bottomLeftCorner(h, h), offs);
    current = b.bottomRightCorner(h, h);
  }
  ns.coarse = current;
  return ns;
}

namespace {

BandedBlock truncate_block(const BandedBlock& b, int nb) {
  const auto keep = band_offsets(b.n, nb);
  BandedBlock out;
  out.n = b.n;
  out.offsets = keep;
  out.values.assign(b.n * keep.size(), 0.0);
  const auto nn = static_cast<std::ptrdiff_t>(b.n);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto it = std::find_if(b.offsets.begin(), b.offsets.end(), [&](int o) {
      return wrap(o - keep[j], nn) == 0;
    });
    if (it == b.offsets.end()) continue;
    const auto src = static_cast<std::size_t>(it - b.offsets.begin());
    for (std::size_t k = 0; k < b.n; ++k) out.at(k, j) = b.at(k, src);
  }
  return out;
}

}  // namespace

NonstandardForm truncate(const NonstandardForm& ns, int nb) {
  if (nb < 0) throw ConfigError("truncate: band half-width must be >= 0");
  NonstandardForm out = ns;
  const int eff = ns.nb ? std::min(*ns.nb, nb) : nb;
  out.nb = eff;
  for (auto& lvl : out.levels) {
    lvl.d1 = truncate_block(lvl.d1, eff);
    lvl.d2 = truncate_block(lvl.d2, eff);
    lvl.d3 = truncate_block(lvl.d3, eff);
  }
  return out;
}

Vector apply(const NonstandardForm& ns, std::span<const double> v, const WaveletFilter& filter) {
  if (v.size() != ns.size()) {
    std::ostringstream msg;
    msg << "apply: vector length " << v.size() << " does not match operator size " << ns.size();
    throw ShapeError(msg.str());
  }
  if (filter.p != ns.p) throw ConfigError("apply: filter order differs from the one used to build");

  const auto nlev = static_cast<std::size_t>(ns.L - ns.L0);
  std::vector<Vector> d(nlev), vs(nlev);
  Vector current(v.begin(), v.end());
  for (int l = ns.L - 1; l >= ns.L0; --l) {
    auto step = forward_step(current, filter);
    const auto i = static_cast<std::size_t>(l - ns.L0);
    d[i] = std::move(step.w);
    vs[i] = step.s;
    current = std::move(step.s);
  }

  Vector u(std::size_t{1} << ns.L0, 0.0);
  for (int l = ns.L0; l < ns.L; ++l) {
    const auto i = static_cast<std::size_t>(l - ns.L0);
    const auto& lvl = ns.levels[i];
    const std::size_t n = d[i].size();
    Vector w(n, 0.0), s(n, 0.0);
    lvl.d1.multiply_add(d[i], w);
    lvl.d2.multiply_add(vs[i], w);
    lvl.d3.multiply_add(d[i], s);
    if (l == ns.L0) {
      const Eigen::Map<const Eigen::VectorXd> vin(vs[i].data(), static_cast<Eigen::Index>(n));
      Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(n)) += ns.coarse * vin;
    }
    for (std::size_t k = 0; k < n; ++k) s[k] += u[k];
    u = inverse_step(w, s, filter);
  }
  return u;
}

Eigen::MatrixXd assemble_dense(const NonstandardForm& ns, const WaveletFilter& filter) {
  const std::size_t n = ns.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Vector e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Vector col = apply(ns, e, filter);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  return out;
}

std::vector<LayoutEntry> default_layout(int level, std::optional<int> nb) {
  const auto offs = band_offsets(std::size_t{1} << level, nb);
  std::vector<LayoutEntry> out;
  out.reserve(3 * offs.size());
  for (Block b : {Block::D1, Block::D2, Block::D3})
    for (int o : offs) out.push_back({b, o});
  return out;
}

VectorCollection extract_vectors(const NonstandardForm& ns) {
  VectorCollection c;
  c.L = ns.L;
  c.L0 = ns.L0;
  c.p = ns.p;
  c.nb = ns.nb;
  c.coarse = ns.coarse;
  for (int l = ns.L0; l < ns.L; ++l) {
    const auto& lvl = ns.level(l);
    auto layout = default_layout(l, ns.nb);
    const std::size_t nd = lvl.d1.num_diagonals();
    if (layout.size() != 3 * nd || lvl.d2.num_diagonals() != nd || lvl.d3.num_diagonals() != nd)
      throw ShapeError("extract_vectors: block diagonals do not match the band layout");
    const std::size_t n = lvl.d1.n;
    RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout.size()));
    const BandedBlock* blocks[3] = {&lvl.d1, &lvl.d2, &lvl.d3};
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t j = 0; j < nd; ++j)
        for (std::size_t k = 0; k < n; ++k)
          m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b * nd + j)) =
              blocks[b]->at(k, j);
    c.columns.push_back(std::move(m));
    c.layout.push_back(std::move(layout));
  }
  return c;
}

NonstandardForm embed(const VectorCollection& c) {
  const auto nlev = static_cast<std::size_t>(c.L - c.L0);
  if (c.columns.size() != nlev || c.layout.size() != nlev)
    throw ShapeError("embed: level count does not match L - L0");
  const auto nc = static_cast<Eigen::Index>(std::size_t{1} << c.L0);
  if (c.coarse.rows() != nc || c.coarse.cols() != nc)
    throw ShapeError("embed: coarse block has wrong size");

  NonstandardForm ns;
  ns.L = c.L;
  ns.L0 = c.L0;
  ns.p = c.p;
  ns.nb = c.nb;
  ns.coarse = c.coarse;
  ns.levels.resize(nlev);
  for (int l = c.L0; l < c.L; ++l) {
    const auto i = static_cast<std::size_t>(l - c.L0);
    const auto& layout = c.layout[i];
    const auto& m = c.columns[i];
    const std::size_t n = std::size_t{1} << l;
    if (layout != default_layout(l, c.nb) || m.rows() != static_cast<Eigen::Index>(n) ||
        m.cols() != static_cast<Eigen::Index>(layout.size())) {
      std::ostringstream msg;
      msg << "embed: layout mismatch at level " << l;
      throw ShapeError(msg.str());
    }
    const auto offs = band_offsets(n, c.nb);
    const std::size_t nd = offs.size();
    BandedBlock* blocks[3] = {&ns.levels[i].d1, &ns.levels[i].d2, &ns.levels[i].d3};
    for (std::size_t b = 0; b < 3; ++b) {
      blocks[b]->n = n;
      blocks[b]->offsets = offs;
      blocks[b]->values.resize(n * nd);
      for (std::size_t j = 0; j < nd; ++j)
        for (std::size_t k = 0; k < n; ++k)
          blocks[b]->at(k, j) = m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b * nd + j));
    }
  }
  return ns;
}

}  // namespace nsmeta
