#include "doctest.h"

#include <cmath>

#include "nsmeta/errors.hpp"
#include "nsmeta/nsform.hpp"
#include "unit/test_util.hpp"

using namespace nsmeta;

namespace {

std::vector<double> dense_matvec(const Eigen::MatrixXd& a, const std::vector<double>& v) {
  const Eigen::VectorXd u = a * Eigen::Map<const Eigen::VectorXd>(v.data(), a.cols());
  return {u.data(), u.data() + u.size()};
}

double block_max(const BandedBlock& b) {
  double m = 0.0;
  for (double x : b.values) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("band offsets") {
  CHECK(band_offsets(16, 3) == std::vector<int>{-3, -2, -1, 0, 1, 2, 3});
  CHECK(band_offsets(4, 3) == std::vector<int>{-1, 0, 1, 2});
  CHECK(band_offsets(8, std::nullopt) == std::vector<int>{-3, -2, -1, 0, 1, 2, 3, 4});
  CHECK(band_offsets(8, 0) == std::vector<int>{0});
}

TEST_CASE("banded block dense round trip") {
  const Eigen::MatrixXd m = testutil::random_matrix(8, 8, 5);
  const auto b = BandedBlock::from_dense(m, band_offsets(8, std::nullopt));
  CHECK((b.to_dense() - m).cwiseAbs().maxCoeff() == 0.0);
  const auto x = testutil::random_vector(8, 6);
  std::vector<double> y(8, 0.0);
  b.multiply_add(x, y);
  CHECK(testutil::rel_error(y, dense_matvec(m, x)) < 1e-14);
}

TEST_CASE("nonstandard form of the identity") {
  for (int p : {1, 2, 3}) {
    const auto& f = daubechies_filter(p);
    const int L0 = min_coarse_level(p);
    const int L = L0 + 3;
    const auto ns = build_nonstandard(Eigen::MatrixXd::Identity(1 << L, 1 << L), f, L0);
    for (int l = L0; l < L; ++l) {
      const auto& lvl = ns.level(l);
      const auto n = static_cast<Eigen::Index>(1) << l;
      CHECK((lvl.d1.to_dense() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-13);
      CHECK(block_max(lvl.d2) < 1e-13);
      CHECK(block_max(lvl.d3) < 1e-13);
    }
    CHECK((ns.coarse - Eigen::MatrixXd::Identity(1 << L0, 1 << L0)).cwiseAbs().maxCoeff() < 1e-13);

    const auto v = testutil::random_vector(std::size_t{1} << L, 17);
    CHECK(testutil::rel_error(apply(ns, v, f), v) < 1e-12);
    CHECK((assemble_dense(ns, f) - Eigen::MatrixXd::Identity(1 << L, 1 << L)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("reconstruction of a random matrix") {
  const auto& haar = daubechies_filter(1);
  const Eigen::MatrixXd a = testutil::random_matrix(16, 16, 21);
  const auto ns = build_nonstandard(a, haar, 0);
  const Eigen::MatrixXd back = assemble_dense(ns, haar);
  CHECK((back - a).norm() < 1e-12 * a.norm());
}

TEST_CASE("symmetric sources give symmetric blocks") {
  const auto& f = daubechies_filter(3);
  Eigen::MatrixXd a = testutil::random_matrix(64, 64, 8);
  a = (a + a.transpose()).eval();
  const auto ns = build_nonstandard(a, f, 3);
  for (int l = 3; l < 6; ++l) {
    const auto& lvl = ns.level(l);
    const Eigen::MatrixXd d1 = lvl.d1.to_dense();
    CHECK((d1 - d1.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lvl.d3.to_dense() - lvl.d2.to_dense().transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK((ns.coarse - ns.coarse.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd g = assemble_dense(truncate(ns, 2), f);
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("untruncated apply equals the dense product") {
  const auto& f = daubechies_filter(3);
  const Eigen::MatrixXd a = testutil::random_matrix(64, 64, 31);
  const auto ns = build_nonstandard(a, f, 3);
  for (int t = 0; t < 5; ++t) {
    const auto v = testutil::random_vector(64, 40 + t);
    CHECK(testutil::rel_error(apply(ns, v, f), dense_matvec(a, v)) < 1e-11);
  }

  // Linearity.
  const auto v1 = testutil::random_vector(64, 50);
  const auto v2 = testutil::random_vector(64, 51);
  const double alpha = 0.3, beta = -1.7;
  std::vector<double> comb(64);
  for (int i = 0; i < 64; ++i) comb[i] = alpha * v1[i] + beta * v2[i];
  const auto u1 = apply(ns, v1, f);
  const auto u2 = apply(ns, v2, f);
  std::vector<double> expect(64);
  for (int i = 0; i < 64; ++i) expect[i] = alpha * u1[i] + beta * u2[i];
  CHECK(testutil::rel_error(apply(ns, comb, f), expect) < 1e-12);

  CHECK_THROWS_AS(apply(ns, std::vector<double>(32), f), ShapeError);
  CHECK_THROWS_AS(build_nonstandard(Eigen::MatrixXd::Zero(64, 32), f, 3), ShapeError);
  CHECK_THROWS_AS(build_nonstandard(Eigen::MatrixXd::Zero(48, 48), f, 3), ShapeError);
}

TEST_CASE("truncation") {
  const auto& f = daubechies_filter(3);
  const Eigen::MatrixXd a = testutil::random_matrix(64, 64, 3);
  const auto ns = build_nonstandard(a, f, 3);

  SUBCASE("full band is exact") {
    const auto tr = truncate(ns, 32);
    const auto v = testutil::random_vector(64, 4);
    CHECK(testutil::rel_error(apply(tr, v, f), apply(ns, v, f)) < 1e-14);
  }
  SUBCASE("nb = 0 keeps only the main diagonal") {
    const auto tr = truncate(ns, 0);
    for (int l = 3; l < 6; ++l) {
      const Eigen::MatrixXd full = ns.level(l).d2.to_dense();
      const Eigen::MatrixXd kept = tr.level(l).d2.to_dense();
      const Eigen::MatrixXd diag = full.diagonal().asDiagonal();
      CHECK((kept - diag).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((tr.coarse - ns.coarse).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(truncate(ns, -1), ConfigError);
}

TEST_CASE("log kernel truncation error decreases with the band") {
  const auto& f = daubechies_filter(3);
  const Eigen::MatrixXd a = testutil::log_kernel_matrix(256);
  const auto ns = build_nonstandard(a, f, 3);
  const double norm = testutil::spectral_norm(a);
  double previous = INFINITY;
  for (int nb : {1, 2, 4, 8}) {
    const double err = testutil::spectral_norm(assemble_dense(truncate(ns, nb), f) - a) / norm;
    MESSAGE("log kernel nb=" << nb << " relative error " << err);
    CHECK(err < previous);
    previous = err;
  }
}

TEST_CASE("vector collections") {
  const auto& f = daubechies_filter(3);
  const Eigen::MatrixXd a = testutil::random_matrix(64, 64, 12);
  const auto ns = truncate(build_nonstandard(a, f, 3), 2);
  const auto c = extract_vectors(ns);
  REQUIRE(c.columns.size() == 3);
  CHECK(c.columns[2].cols() == 3 * 5);
  CHECK(c.columns[0].rows() == 8);

  const auto back = embed(c);
  for (int t = 0; t < 10; ++t) {
    const auto v = testutil::random_vector(64, 70 + t);
    CHECK(testutil::rel_error(apply(back, v, f), apply(ns, v, f)) < 1e-14);
  }

  // extract(embed(C)) = C for arbitrary C.
  VectorCollection r = c;
  for (std::size_t i = 0; i < r.columns.size(); ++i)
    r.columns[i] = testutil::random_matrix(r.columns[i].rows(), r.columns[i].cols(), 90 + i);
  const auto again = extract_vectors(embed(r));
  for (std::size_t i = 0; i < r.columns.size(); ++i) CHECK(again.columns[i] == r.columns[i]);

  // Zero diagonals leave only the coarse block acting.
  VectorCollection z = c;
  for (auto& m : z.columns) m.setZero();
  const auto zs = embed(z);
  const auto v = testutil::random_vector(64, 3);
  NonstandardForm coarse_only = zs;
  const auto u = apply(zs, v, f);
  const auto pyr = forward_transform(v, f, 3);
  Pyramid expect;
  expect.L = 6;
  expect.L0 = 3;
  expect.w = {std::vector<double>(8, 0.0), std::vector<double>(16, 0.0),
              std::vector<double>(32, 0.0)};
  const Eigen::VectorXd s = ns.coarse * Eigen::Map<const Eigen::VectorXd>(pyr.s.data(), 8);
  expect.s.assign(s.data(), s.data() + 8);
  CHECK(testutil::rel_error(u, inverse_transform(expect, f)) < 1e-13);

  VectorCollection bad = c;
  bad.columns[1] = RowMatrix::Zero(16, 4);
  CHECK_THROWS_AS(embed(bad), ShapeError);
}
