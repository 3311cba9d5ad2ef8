#pragma once

// Oracle suites shared by `nsmeta verify` and the acceptance binary. Each
// check collects named probes (measured value against a tolerance).

#include <string>
#include <vector>

namespace nsmeta {

struct Probe {
  std::string label;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct CheckResult {
  std::string name;
  std::vector<Probe> probes;
  double seconds = 0.0;
  /// Wall-clock budget; 0 means none.
  double time_limit = 0.0;

  bool passed() const;
  /// Probe with the largest value / tolerance.
  const Probe* worst() const;
};

/// Untruncated nonstandard apply against dense matvec, and
/// assemble_dense(build_nonstandard(A)) against A: 20 matrices, N = 64, p = 1, 3.
CheckResult check_nsform_exactness();
/// Round trips, orthogonality of the assembled transform and vanishing
/// moments for p = 1..3 and L up to max_L.
CheckResult check_wavelets(int max_L = 10);
/// Exact filters and C from a true nonstandard form (alpha = 1) reproduce
/// nsform apply in 1D and 2D, periodic and zero padding.
CheckResult check_architecture();
/// Central differences of the full MetaModel loss (N = 16, alpha = K = 2), 5 seeds.
CheckResult check_gradient();
/// Elliptic residuals and Fourier modes, RTE Neumann terms, E1 table.
CheckResult check_solvers();
/// Error of the linearized Green's function under eps halving (N = 64).
CheckResult check_perturbative();
/// ||G - G^T||_max of exported operators with random elliptic-mode parameters.
CheckResult check_symmetry();
/// Band truncation error of the periodic log kernel and an elliptic G at
/// N = 256 for nb = 1, 2, 4, 8.
CheckResult check_truncation();
/// Generates and trains twice from the same seeds under `scratch` and
/// compares the files byte for byte.
CheckResult check_determinism(const std::string& scratch, int threads = 1);

/// All of the above (wavelets at L <= 10).
std::vector<CheckResult> run_verify_suites(const std::string& scratch, int threads = 1);

/// One PASS/FAIL line per check with the worst probe.
std::string format_results(const std::vector<CheckResult>& results);

}  // namespace nsmeta
