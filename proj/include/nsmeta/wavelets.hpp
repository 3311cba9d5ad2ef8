#pragma once

// Daubechies filters and periodic multiresolution transforms.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nsmeta {

using Vector = std::vector<double>;

/// Row-major square grid; flat index of (i1, i2) is i1 * n + i2.
using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Low-pass/high-pass pair of a Daubechies wavelet with p vanishing moments.
///
/// The high-pass filter is defined by g_i = (-1)^(1-i) h_(1-i), nonzero for
/// i = -2p+2 .. 1.  It is stored shifted so that every convolution uses the
/// index range 0..2p-1: g[j] = g_(j - g_offset) with g_offset = 2p - 2.
struct WaveletFilter {
  int p = 1;
  std::vector<double> h;
  std::vector<double> g;
  int g_offset = 0;

  int support() const { return 2 * p; }
};

/// Minimum-phase Daubechies filter, p in 1..=5. Throws ConfigError otherwise.
const WaveletFilter& daubechies_filter(int p);

/// Smallest coarse level whose periodized basis functions do not overlap
/// themselves: ceil(log2(2p)) for p > 1, and 0 for the Haar filter.
int min_coarse_level(int p);

bool is_power_of_two(std::size_t n);
/// log2 of a power of two; throws ShapeError otherwise.
int exact_log2(std::size_t n);

/// Periodic index i mod n, correct for negative i.
inline std::ptrdiff_t wrap(std::ptrdiff_t i, std::ptrdiff_t n) {
  const std::ptrdiff_t r = i % n;
  return r < 0 ? r + n : r;
}

struct StepOutput {
  Vector w;  // wavelet coefficients
  Vector s;  // scaling coefficients
};

/// One level of the periodic forward transform (length 2n -> n + n).
StepOutput forward_step(std::span<const double> s_in, const WaveletFilter& filter);

/// Exact inverse of forward_step.
Vector inverse_step(std::span<const double> w, std::span<const double> s,
                    const WaveletFilter& filter);

/// Multilevel decomposition of a length-2^L vector down to level L0.
struct Pyramid {
  int L = 0;
  int L0 = 0;
  std::vector<Vector> w;  // w[l - L0] has length 2^l, l = L0..L-1
  Vector s;               // scaling coefficients at level L0

  const Vector& wavelet(int level) const { return w.at(static_cast<std::size_t>(level - L0)); }
};

/// Validates (L, L0) against the filter support; throws ConfigError.
void check_levels(int L, int L0, const WaveletFilter& filter);

Pyramid forward_transform(std::span<const double> v, const WaveletFilter& filter, int L0);
Vector inverse_transform(const Pyramid& pyramid, const WaveletFilter& filter);

/// Separable 2D step. w1 = low(dim 0) x high(dim 1), w2 = high x low,
/// w3 = high x high, s = low x low.
struct StepOutput2D {
  Image w1, w2, w3, s;
};

StepOutput2D forward_step_2d(const Image& s_in, const WaveletFilter& filter);
Image inverse_step_2d(const StepOutput2D& coeffs, const WaveletFilter& filter);

}  // namespace nsmeta
