#pragma once

// Nonstandard (BCR) form of an operator: A = W S W^T with S block-sparse
// across scales and each wavelet block stored by its periodic diagonals.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nsmeta/wavelets.hpp"

namespace nsmeta {

using RowMatrix = Image;

/// Periodic diagonal offsets kept for an n x n block at half-width nb.
///
/// Returns -nb..nb when those 2nb+1 diagonals are distinct mod n, otherwise
/// every residue once, as -floor((n-1)/2) .. floor(n/2). nb = nullopt means untruncated.
std::vector<int> band_offsets(std::size_t n, std::optional<int> nb);

/// An n x n matrix stored by periodic diagonals:
/// values[k * offsets.size() + j] = M(k, (k + offsets[j]) mod n).
struct BandedBlock {
  std::size_t n = 0;
  std::vector<int> offsets;
  std::vector<double> values;

  std::size_t num_diagonals() const { return offsets.size(); }
  double& at(std::size_t row, std::size_t diag) { return values[row * offsets.size() + diag]; }
  double at(std::size_t row, std::size_t diag) const { return values[row * offsets.size() + diag]; }

  static BandedBlock from_dense(const Eigen::MatrixXd& m, std::vector<int> offsets);
  Eigen::MatrixXd to_dense() const;
  /// y += M x
  void multiply_add(std::span<const double> x, std::span<double> y) const;
};

struct NonstandardLevel {
  BandedBlock d1;  // wavelet <- wavelet
  BandedBlock d2;  // wavelet <- scaling
  BandedBlock d3;  // scaling <- wavelet
};

struct NonstandardForm {
  int L = 0;
  int L0 = 0;
  int p = 1;
  std::optional<int> nb;               // nullopt: untruncated
  std::vector<NonstandardLevel> levels;  // levels[l - L0]
  Eigen::MatrixXd coarse;              // A^(L0), dense

  std::size_t size() const { return std::size_t{1} << L; }
  const NonstandardLevel& level(int l) const { return levels.at(static_cast<std::size_t>(l - L0)); }
};

/// (D1 D2; D3 A^(l)) = (W^(l))^T A^(l+1) W^(l) for l = L-1 .. L0.
NonstandardForm build_nonstandard(const Eigen::MatrixXd& a, const WaveletFilter& filter, int L0);

/// Keeps periodic diagonals with |offset| <= nb in every D block.
NonstandardForm truncate(const NonstandardForm& ns, int nb);

/// u = W S W^T v via the level-by-level transform, band products and
/// inverse transform.
Vector apply(const NonstandardForm& ns, std::span<const double> v, const WaveletFilter& filter);

/// Dense W S W^T; column j is apply(ns, e_j).
Eigen::MatrixXd assemble_dense(const NonstandardForm& ns, const WaveletFilter& filter);

enum class Block { D1 = 0, D2 = 1, D3 = 2 };

struct LayoutEntry {
  Block block;
  int offset;

  bool operator==(const LayoutEntry&) const = default;
};

/// Per-level diagonal vectors C^(l) (2^l x n_c) plus the dense coarse block.
struct VectorCollection {
  int L = 0;
  int L0 = 0;
  int p = 1;
  std::optional<int> nb;
  std::vector<RowMatrix> columns;                // columns[l - L0]: 2^l x n_c
  std::vector<std::vector<LayoutEntry>> layout;  // layout[l - L0][col]
  Eigen::MatrixXd coarse;
};

/// Default layout at level l: all D1 offsets, then D2, then D3.
std::vector<LayoutEntry> default_layout(int level, std::optional<int> nb);

VectorCollection extract_vectors(const NonstandardForm& ns);
NonstandardForm embed(const VectorCollection& c);

}  // namespace nsmeta
