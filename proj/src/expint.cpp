#include <cmath>
#include <limits>
#include <numbers>

#include "nsmeta/errors.hpp"
#include "nsmeta/solvers.hpp"

namespace nsmeta {

double expint_e1(double z) {
  if (!(z > 0.0)) throw DomainError("expint_e1: argument must be positive");
  if (std::isinf(z)) return 0.0;
  constexpr double eps = std::numeric_limits<double>::epsilon();

  if (z <= 1.0) {
    // E1(z) = -gamma - ln z - sum_{k>=1} (-z)^k / (k k!)
    double sum = 0.0, term = 1.0;
    for (int k = 1; k < 100; ++k) {
      term *= -z / k;
      const double add = term / k;
      sum += add;
      if (std::abs(add) < eps * std::abs(sum)) break;
    }
    return -std::numbers::egamma - std::log(z) - sum;
  }

  // modified Lentz on the even continued fraction
  constexpr double tiny = 1e-300;
  double b = z + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h * std::exp(-z);
}

}  // namespace nsmeta
