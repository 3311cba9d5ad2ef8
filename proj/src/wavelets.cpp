#include "nsmeta/wavelets.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "nsmeta/errors.hpp"

namespace nsmeta {

namespace {

constexpr int kMaxP = 5;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Residuals of the defining system: sum h = sqrt(2), sum h_i h_(i+2m) = delta_m
// for m = 0..p-1, and sum (-1)^i i^k h_i = 0 for k = 1..p-1.
Eigen::VectorXd filter_residual(const Eigen::VectorXd& h, int p) {
  const int n = 2 * p;
  Eigen::VectorXd f(n);
  f(0) = h.sum() - std::sqrt(2.0);
  for (int m = 0; m < p; ++m) {
    double acc = 0.0;
    for (int i = 0; i + 2 * m < n; ++i) acc += h(i) * h(i + 2 * m);
    f(1 + m) = acc - (m == 0 ? 1.0 : 0.0);
  }
  for (int k = 1; k < p; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += ((i % 2) ? -1.0 : 1.0) * std::pow(i, k) * h(i);
    f(p + k) = acc;
  }
  return f;
}

Eigen::MatrixXd filter_jacobian(const Eigen::VectorXd& h, int p) {
  const int n = 2 * p;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  J.row(0).setOnes();
  for (int m = 0; m < p; ++m) {
    for (int j = 0; j < n; ++j) {
      double d = 0.0;
      if (j + 2 * m < n) d += h(j + 2 * m);
      if (j - 2 * m >= 0) d += h(j - 2 * m);
      J(1 + m, j) = d;
    }
  }
  for (int k = 1; k < p; ++k)
    for (int j = 0; j < n; ++j) J(p + k, j) = ((j % 2) ? -1.0 : 1.0) * std::pow(j, k);
  return J;
}

// Spectral factorization of the Daubechies product filter, keeping the
// zeros inside the unit circle, followed by Newton polishing on the
// defining equations.
WaveletFilter build_filter(int p) {
  WaveletFilter filt;
  filt.p = p;
  const int n = 2 * p;
  Eigen::VectorXd h(n);

  if (p == 1) {
    h << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  } else {
    // P(y) = sum_k C(p-1+k, k) y^k via its companion matrix.
    const int deg = p - 1;
    std::vector<double> c(p);
    for (int k = 0; k < p; ++k) c[k] = binomial(p - 1 + k, k);
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -c[i] / c[deg];
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
    const Eigen::VectorXcd yroots = es.eigenvalues();

    std::vector<std::complex<double>> poly{1.0};
    auto multiply_linear = [&poly](std::complex<double> root) {
      std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
      for (std::size_t i = 0; i < poly.size(); ++i) {
        next[i + 1] += poly[i];
        next[i] -= root * poly[i];
      }
      poly = std::move(next);
    };
    for (int i = 0; i < p; ++i) multiply_linear(-1.0);
    for (int k = 0; k < deg; ++k) {
      const std::complex<double> b = 2.0 - 4.0 * yroots(k);
      const std::complex<double> disc = std::sqrt(b * b - 4.0);
      const std::complex<double> z1 = (b + disc) / 2.0;
      const std::complex<double> z2 = (b - disc) / 2.0;
      multiply_linear(std::abs(z1) < 1.0 ? z1 : z2);
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      h(i) = poly[i].real();
      total += h(i);
    }
    h *= std::sqrt(2.0) / total;
    if (std::abs(h(0)) < std::abs(h(n - 1))) h.reverseInPlace();

    for (int iter = 0; iter < 8; ++iter) {
      const Eigen::VectorXd f = filter_residual(h, p);
      if (f.cwiseAbs().maxCoeff() < 1e-16) break;
      const Eigen::MatrixXd J = filter_jacobian(h, p);
      h -= J.colPivHouseholderQr().solve(f);
    }
  }

  if (filter_residual(h, p).cwiseAbs().maxCoeff() > 1e-13) {
    std::ostringstream msg;
    msg << "Daubechies filter p=" << p << " failed its orthogonality check";
    throw ConfigError(msg.str());
  }

  filt.h.assign(h.data(), h.data() + n);
  filt.g_offset = 2 * p - 2;
  filt.g.resize(n);
  // g_i = (-1)^(1-i) h_(1-i) stored at j = i + g_offset.
  for (int j = 0; j < n; ++j) {
    const int i = j - filt.g_offset;
    filt.g[j] = (((1 - i) % 2) != 0 ? -1.0 : 1.0) * filt.h[1 - i];
  }
  return filt;
}

void transform_along(const WaveletFilter& filter, const Image& in, bool along_rows, Image& low,
                     Image& high) {
  const Eigen::Index n0 = in.rows();
  const Eigen::Index n1 = in.cols();
  if (along_rows) {
    low.resize(n0, n1 / 2);
    high.resize(n0, n1 / 2);
    Vector line(n1);
    for (Eigen::Index r = 0; r < n0; ++r) {
      for (Eigen::Index c = 0; c < n1; ++c) line[c] = in(r, c);
      auto out = forward_step(line, filter);
      for (Eigen::Index c = 0; c < n1 / 2; ++c) {
        low(r, c) = out.s[c];
        high(r, c) = out.w[c];
      }
    }
  } else {
    low.resize(n0 / 2, n1);
    high.resize(n0 / 2, n1);
    Vector line(n0);
    for (Eigen::Index c = 0; c < n1; ++c) {
      for (Eigen::Index r = 0; r < n0; ++r) line[r] = in(r, c);
      auto out = forward_step(line, filter);
      for (Eigen::Index r = 0; r < n0 / 2; ++r) {
        low(r, c) = out.s[r];
        high(r, c) = out.w[r];
      }
    }
  }
}

Image inverse_along(const WaveletFilter& filter, const Image& low, const Image& high,
                    bool along_rows) {
  Image out;
  if (along_rows) {
    const Eigen::Index n0 = low.rows();
    const Eigen::Index half = low.cols();
    out.resize(n0, 2 * half);
    Vector w(half), s(half);
    for (Eigen::Index r = 0; r < n0; ++r) {
      for (Eigen::Index c = 0; c < half; ++c) {
        s[c] = low(r, c);
        w[c] = high(r, c);
      }
      const Vector line = inverse_step(w, s, filter);
      for (Eigen::Index c = 0; c < 2 * half; ++c) out(r, c) = line[c];
    }
  } else {
    const Eigen::Index half = low.rows();
    const Eigen::Index n1 = low.cols();
    out.resize(2 * half, n1);
    Vector w(half), s(half);
    for (Eigen::Index c = 0; c < n1; ++c) {
      for (Eigen::Index r = 0; r < half; ++r) {
        s[r] = low(r, c);
        w[r] = high(r, c);
      }
      const Vector line = inverse_step(w, s, filter);
      for (Eigen::Index r = 0; r < 2 * half; ++r) out(r, c) = line[r];
    }
  }
  return out;
}

}  // namespace

const WaveletFilter& daubechies_filter(int p) {
  if (p < 1 || p > kMaxP) {
    std::ostringstream msg;
    msg << "unsupported Daubechies order p=" << p << " (supported: 1.." << kMaxP << ")";
    throw ConfigError(msg.str());
  }
  static const std::array<WaveletFilter, kMaxP> cache = [] {
    std::array<WaveletFilter, kMaxP> out;
    for (int q = 1; q <= kMaxP; ++q) out[q - 1] = build_filter(q);
    return out;
  }();
  return cache[p - 1];
}

int min_coarse_level(int p) {
  if (p <= 1) return 0;
  int level = 0;
  while ((1 << level) < 2 * p) ++level;
  return level;
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

int exact_log2(std::size_t n) {
  if (!is_power_of_two(n)) {
    std::ostringstream msg;
    msg << "length " << n << " is not a power of two";
    throw ShapeError(msg.str());
  }
  int l = 0;
  while ((std::size_t{1} << l) < n) ++l;
  return l;
}

StepOutput forward_step(std::span<const double> s_in, const WaveletFilter& filter) {
  const std::size_t n = s_in.size();
  if (n < 2 || !is_power_of_two(n)) {
    std::ostringstream msg;
    msg << "forward_step: length " << n << " is not a power of two >= 2";
    throw ShapeError(msg.str());
  }
  const std::size_t half = n / 2;
  const auto nn = static_cast<std::ptrdiff_t>(n);
  const int len = filter.support();
  StepOutput out{Vector(half, 0.0), Vector(half, 0.0)};
  for (std::size_t k = 0; k < half; ++k) {
    double s = 0.0, w = 0.0;
    for (int i = 0; i < len; ++i) {
      const double x = s_in[wrap(static_cast<std::ptrdiff_t>(2 * k) + i, nn)];
      s += filter.h[i] * x;
      w += filter.g[i] * x;
    }
    out.s[k] = s;
    out.w[k] = w;
  }
  return out;
}

Vector inverse_step(std::span<const double> w, std::span<const double> s,
                    const WaveletFilter& filter) {
  if (w.size() != s.size() || !is_power_of_two(s.size())) {
    std::ostringstream msg;
    msg << "inverse_step: lengths " << w.size() << " and " << s.size()
        << " must be equal powers of two";
    throw ShapeError(msg.str());
  }
  const std::size_t half = s.size();
  const auto n = static_cast<std::ptrdiff_t>(2 * half);
  const int len = filter.support();
  Vector out(2 * half, 0.0);
  // Transpose of forward_step: scatter each coefficient back along its filter.
  for (std::size_t k = 0; k < half; ++k) {
    for (int i = 0; i < len; ++i) {
      const auto j = wrap(static_cast<std::ptrdiff_t>(2 * k) + i, n);
      out[j] += filter.h[i] * s[k] + filter.g[i] * w[k];
    }
  }
  return out;
}

void check_levels(int L, int L0, const WaveletFilter& filter) {
  if (L0 < 0 || L0 >= L) {
    std::ostringstream msg;
    msg << "coarse level L0=" << L0 << " must satisfy 0 <= L0 < L=" << L;
    throw ConfigError(msg.str());
  }
  if (L0 < min_coarse_level(filter.p)) {
    std::ostringstream msg;
    msg << "coarse level L0=" << L0 << " too small for filter support " << filter.support()
        << " (need L0 >= " << min_coarse_level(filter.p) << ")";
    throw ConfigError(msg.str());
  }
}

Pyramid forward_transform(std::span<const double> v, const WaveletFilter& filter, int L0) {
  const int L = exact_log2(v.size());
  check_levels(L, L0, filter);
  Pyramid pyr;
  pyr.L = L;
  pyr.L0 = L0;
  pyr.w.resize(static_cast<std::size_t>(L - L0));
  Vector current(v.begin(), v.end());
  for (int l = L - 1; l >= L0; --l) {
    auto step = forward_step(current, filter);
    pyr.w[static_cast<std::size_t>(l - L0)] = std::move(step.w);
    current = std::move(step.s);
  }
  pyr.s = std::move(current);
  return pyr;
}

Vector inverse_transform(const Pyramid& pyramid, const WaveletFilter& filter) {
  if (pyramid.w.size() != static_cast<std::size_t>(pyramid.L - pyramid.L0) ||
      pyramid.s.size() != (std::size_t{1} << pyramid.L0)) {
    throw ShapeError("inverse_transform: pyramid levels inconsistent with L, L0");
  }
  Vector current = pyramid.s;
  for (int l = pyramid.L0; l < pyramid.L; ++l) {
    const Vector& w = pyramid.wavelet(l);
    if (w.size() != current.size()) throw ShapeError("inverse_transform: level size mismatch");
    current = inverse_step(w, current, filter);
  }
  return current;
}

StepOutput2D forward_step_2d(const Image& s_in, const WaveletFilter& filter) {
  if (s_in.rows() != s_in.cols() || !is_power_of_two(static_cast<std::size_t>(s_in.rows())) ||
      s_in.rows() < 2) {
    throw ShapeError("forward_step_2d: input must be square with power-of-two side >= 2");
  }
  Image row_low, row_high;
  transform_along(filter, s_in, /*along_rows=*/true, row_low, row_high);
  StepOutput2D out;
  // Dimension 1 (within rows) first, then dimension 0.
  transform_along(filter, row_low, false, out.s, out.w2);
  transform_along(filter, row_high, false, out.w1, out.w3);
  return out;
}

Image inverse_step_2d(const StepOutput2D& c, const WaveletFilter& filter) {
  const Eigen::Index n = c.s.rows();
  for (const Image* m : {&c.w1, &c.w2, &c.w3, &c.s}) {
    if (m->rows() != n || m->cols() != n)
      throw ShapeError("inverse_step_2d: coefficient blocks must share one square shape");
  }
  if (!is_power_of_two(static_cast<std::size_t>(n)))
    throw ShapeError("inverse_step_2d: side must be a power of two");
  const Image row_low = inverse_along(filter, c.s, c.w2, false);
  const Image row_high = inverse_along(filter, c.w1, c.w3, false);
  return inverse_along(filter, row_low, row_high, true);
}

}  // namespace nsmeta
