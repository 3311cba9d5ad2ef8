#pragma once

// Two-dimensional nonstandard form: operators on 2^L x 2^L periodic grids,
// with fifteen banded blocks per level in the (w1, w2, w3, s) basis.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nsmeta/nsform.hpp"

namespace nsmeta {

using Offset2 = std::array<int, 2>;

/// Cartesian product of band_offsets along both grid dimensions.
std::vector<Offset2> band_offsets_2d(std::size_t n, std::optional<int> nb);

/// Operator on n x n grids stored by 2D periodic diagonals:
/// values[(k1 * n + k2) * nd + j] = M((k1,k2), (k1+o1, k2+o2) mod n).
struct BandedBlock2D {
  std::size_t n = 0;
  std::vector<Offset2> offsets;
  std::vector<double> values;

  std::size_t num_diagonals() const { return offsets.size(); }
  double& at(std::size_t pixel, std::size_t diag) { return values[pixel * offsets.size() + diag]; }
  double at(std::size_t pixel, std::size_t diag) const {
    return values[pixel * offsets.size() + diag];
  }

  static BandedBlock2D from_dense(const Eigen::MatrixXd& m, std::size_t n,
                                  std::vector<Offset2> offsets);
  Eigen::MatrixXd to_dense() const;
  void multiply_add(std::span<const double> x, std::span<double> y) const;
};

/// Block (row, col) of the 4x4 level matrix; row/col 0..2 are the wavelet
/// types, 3 the scaling part. (3,3) is the coarse/next-level block and has
/// no index; the others map to 0..14 in row-major order.
constexpr int block_index_2d(int row, int col) { return row * 4 + col; }

struct NonstandardLevel2D {
  std::array<BandedBlock2D, 15> blocks;

  const BandedBlock2D& block(int row, int col) const {
    return blocks[static_cast<std::size_t>(block_index_2d(row, col))];
  }
};

struct NonstandardForm2D {
  int L = 0;
  int L0 = 0;
  int p = 1;
  std::optional<int> nb;
  std::vector<NonstandardLevel2D> levels;  // levels[l - L0]
  Eigen::MatrixXd coarse;                  // 4^L0 x 4^L0

  std::size_t side() const { return std::size_t{1} << L; }
  const NonstandardLevel2D& level(int l) const { return levels.at(static_cast<std::size_t>(l - L0)); }
};

/// a acts on row-major flattened 2^L x 2^L grids.
NonstandardForm2D build_nonstandard_2d(const Eigen::MatrixXd& a, const WaveletFilter& filter,
                                       int L0);
NonstandardForm2D truncate_2d(const NonstandardForm2D& ns, int nb);
Vector apply_2d(const NonstandardForm2D& ns, std::span<const double> v,
                const WaveletFilter& filter);
Eigen::MatrixXd assemble_dense_2d(const NonstandardForm2D& ns, const WaveletFilter& filter);

}  // namespace nsmeta
