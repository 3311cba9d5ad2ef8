#include "nsmeta/nsform_2d.hpp"

#include <algorithm>
#include <sstream>

#include "nsmeta/errors.hpp"

namespace nsmeta {

std::vector<Offset2> band_offsets_2d(std::size_t n, std::optional<int> nb) {
  const auto offs = band_offsets(n, nb);
  std::vector<Offset2> out;
  out.reserve(offs.size() * offs.size());
  for (int o1 : offs)
    for (int o2 : offs) out.push_back({o1, o2});
  return out;
}

namespace {

std::size_t shifted_pixel(std::size_t pixel, const Offset2& o, std::size_t n) {
  const auto nn = static_cast<std::ptrdiff_t>(n);
  const auto k1 = static_cast<std::ptrdiff_t>(pixel / n);
  const auto k2 = static_cast<std::ptrdiff_t>(pixel % n);
  return static_cast<std::size_t>(wrap(k1 + o[0], nn) * nn + wrap(k2 + o[1], nn));
}

Image as_image(std::span<const double> v, std::size_t n) {
  Image img(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::copy(v.begin(), v.end(), img.data());
  return img;
}

// Coefficients of one 2D step stacked as (w1, w2, w3, s).
Vector stacked_step(std::span<const double> v, std::size_t n, const WaveletFilter& filter) {
  const auto out = forward_step_2d(as_image(v, n), filter);
  const std::size_t q = (n / 2) * (n / 2);
  Vector r(4 * q);
  const Image* parts[4] = {&out.w1, &out.w2, &out.w3, &out.s};
  for (std::size_t b = 0; b < 4; ++b) std::copy_n(parts[b]->data(), q, r.begin() + b * q);
  return r;
}

Eigen::MatrixXd two_sided_step_2d(const Eigen::MatrixXd& m, std::size_t n,
                                  const WaveletFilter& filter) {
  const Eigen::Index total = m.rows();
  Eigen::MatrixXd left(total, total);
  Vector line(static_cast<std::size_t>(total));
  for (Eigen::Index c = 0; c < total; ++c) {
    for (Eigen::Index r = 0; r < total; ++r) line[r] = m(r, c);
    const Vector out = stacked_step(line, n, filter);
    for (Eigen::Index r = 0; r < total; ++r) left(r, c) = out[r];
  }
  Eigen::MatrixXd both(total, total);
  for (Eigen::Index r = 0; r < total; ++r) {
    for (Eigen::Index c = 0; c < total; ++c) line[c] = left(r, c);
    const Vector out = stacked_step(line, n, filter);
    for (Eigen::Index c = 0; c < total; ++c) both(r, c) = out[c];
  }
  return both;
}

BandedBlock2D truncate_block(const BandedBlock2D& b, int nb) {
  BandedBlock2D out;
  out.n = b.n;
  out.offsets = band_offsets_2d(b.n, nb);
  out.values.assign(b.n * b.n * out.offsets.size(), 0.0);
  const auto nn = static_cast<std::ptrdiff_t>(b.n);
  for (std::size_t j = 0; j < out.offsets.size(); ++j) {
    const auto& o = out.offsets[j];
    const auto it = std::find_if(b.offsets.begin(), b.offsets.end(), [&](const Offset2& q) {
      return wrap(q[0] - o[0], nn) == 0 && wrap(q[1] - o[1], nn) == 0;
    });
    if (it == b.offsets.end()) continue;
    const auto src = static_cast<std::size_t>(it - b.offsets.begin());
    for (std::size_t px = 0; px < b.n * b.n; ++px) out.at(px, j) = b.at(px, src);
  }
  return out;
}

}  // namespace

BandedBlock2D BandedBlock2D::from_dense(const Eigen::MatrixXd& m, std::size_t n,
                                        std::vector<Offset2> offsets) {
  if (m.rows() != static_cast<Eigen::Index>(n * n) || m.cols() != m.rows())
    throw ShapeError("BandedBlock2D::from_dense: matrix must be n^2 x n^2");
  BandedBlock2D b;
  b.n = n;
  b.offsets = std::move(offsets);
  b.values.assign(n * n * b.offsets.size(), 0.0);
  for (std::size_t px = 0; px < n * n; ++px)
    for (std::size_t j = 0; j < b.offsets.size(); ++j)
      b.at(px, j) = m(static_cast<Eigen::Index>(px),
                      static_cast<Eigen::Index>(shifted_pixel(px, b.offsets[j], n)));
  return b;
}

Eigen::MatrixXd BandedBlock2D::to_dense() const {
  const auto total = static_cast<Eigen::Index>(n * n);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(total, total);
  for (std::size_t px = 0; px < n * n; ++px)
    for (std::size_t j = 0; j < offsets.size(); ++j)
      m(static_cast<Eigen::Index>(px), static_cast<Eigen::Index>(shifted_pixel(px, offsets[j], n))) +=
          at(px, j);
  return m;
}

void BandedBlock2D::multiply_add(std::span<const double> x, std::span<double> y) const {
  if (x.size() != n * n || y.size() != n * n)
    throw ShapeError("BandedBlock2D::multiply_add: size mismatch");
  const std::size_t nd = offsets.size();
  for (std::size_t px = 0; px < n * n; ++px) {
    double acc = 0.0;
    for (std::size_t j = 0; j < nd; ++j) acc += at(px, j) * x[shifted_pixel(px, offsets[j], n)];
    y[px] += acc;
  }
}

NonstandardForm2D build_nonstandard_2d(const Eigen::MatrixXd& a, const WaveletFilter& filter,
                                       int L0) {
  if (a.rows() != a.cols()) throw ShapeError("build_nonstandard_2d: matrix must be square");
  const auto total = static_cast<std::size_t>(a.rows());
  std::size_t side = 1;
  while (side * side < total) ++side;
  if (side * side != total) throw ShapeError("build_nonstandard_2d: size is not a square grid");
  const int L = exact_log2(side);
  check_levels(L, L0, filter);

  NonstandardForm2D ns;
  ns.L = L;
  ns.L0 = L0;
  ns.p = filter.p;
  ns.levels.resize(static_cast<std::size_t>(L - L0));
  Eigen::MatrixXd current = a;
  for (int l = L - 1; l >= L0; --l) {
    const std::size_t n = std::size_t{1} << (l + 1);
    const Eigen::MatrixXd b = two_sided_step_2d(current, n, filter);
    const std::size_t h = n / 2;
    const auto q = static_cast<Eigen::Index>(h * h);
    const auto offs = band_offsets_2d(h, std::nullopt);
    auto& lvl = ns.levels[static_cast<std::size_t>(l - L0)];
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        if (r != 3 || c != 3)
          lvl.blocks[static_cast<std::size_t>(block_index_2d(r, c))] =
              BandedBlock2D::from_dense(b.block(r * q, c * q, q, q), h, offs);
    current = b.block(3 * q, 3 * q, q, q);
  }
  ns.coarse = current;
  return ns;
}

NonstandardForm2D truncate_2d(const NonstandardForm2D& ns, int nb) {
  if (nb < 0) throw ConfigError("truncate_2d: band half-width must be >= 0");
  NonstandardForm2D out = ns;
  const int eff = ns.nb ? std::min(*ns.nb, nb) : nb;
  out.nb = eff;
  for (auto& lvl : out.levels)
    for (auto& b : lvl.blocks) b = truncate_block(b, eff);
  return out;
}

Vector apply_2d(const NonstandardForm2D& ns, std::span<const double> v,
                const WaveletFilter& filter) {
  const std::size_t side = ns.side();
  if (v.size() != side * side) {
    std::ostringstream msg;
    msg << "apply_2d: vector length " << v.size() << " does not match grid " << side << "x"
        << side;
    throw ShapeError(msg.str());
  }
  if (filter.p != ns.p) throw ConfigError("apply_2d: filter order differs from the one used to build");

  const auto nlev = static_cast<std::size_t>(ns.L - ns.L0);
  // parts[i][t]: t = 0..2 wavelet types, 3 scaling.
  std::vector<std::array<Vector, 4>> parts(nlev);
  Image current = as_image(v, side);
  for (int l = ns.L - 1; l >= ns.L0; --l) {
    auto step = forward_step_2d(current, filter);
    auto& pr = parts[static_cast<std::size_t>(l - ns.L0)];
    const Image* src[4] = {&step.w1, &step.w2, &step.w3, &step.s};
    for (int t = 0; t < 4; ++t) pr[t].assign(src[t]->data(), src[t]->data() + src[t]->size());
    current = std::move(step.s);
  }

  Image u = Image::Zero(1 << ns.L0, 1 << ns.L0);
  for (int l = ns.L0; l < ns.L; ++l) {
    const auto i = static_cast<std::size_t>(l - ns.L0);
    const auto& lvl = ns.levels[i];
    const std::size_t n = std::size_t{1} << l;
    std::array<Vector, 4> out;
    for (auto& o : out) o.assign(n * n, 0.0);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        if (r != 3 || c != 3) lvl.block(r, c).multiply_add(parts[i][c], out[r]);
    if (l == ns.L0) {
      const Eigen::Map<const Eigen::VectorXd> vin(parts[i][3].data(),
                                                  static_cast<Eigen::Index>(n * n));
      Eigen::Map<Eigen::VectorXd>(out[3].data(), static_cast<Eigen::Index>(n * n)) +=
          ns.coarse * vin;
    }
    StepOutput2D coeffs;
    coeffs.w1 = as_image(out[0], n);
    coeffs.w2 = as_image(out[1], n);
    coeffs.w3 = as_image(out[2], n);
    coeffs.s = as_image(out[3], n) + u;
    u = inverse_step_2d(coeffs, filter);
  }
  return Vector(u.data(), u.data() + u.size());
}

Eigen::MatrixXd assemble_dense_2d(const NonstandardForm2D& ns, const WaveletFilter& filter) {
  const std::size_t total = ns.side() * ns.side();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  Vector e(total, 0.0);
  for (std::size_t j = 0; j < total; ++j) {
    e[j] = 1.0;
    const Vector col = apply_2d(ns, e, filter);
    e[j] = 0.0;
    for (std::size_t i = 0; i < total; ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  return out;
}

}  // namespace nsmeta
