#include "nsmeta/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "nsmeta/errors.hpp"

namespace nsmeta {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  if (data.size() != product(shape))
    throw ShapeError("Tensor: " + std::to_string(data.size()) + " values for shape " +
                     shape_string());
}

std::size_t Tensor::pixels() const {
  if (shape.empty()) return 0;
  return product(std::vector<std::size_t>(shape.begin(), shape.end() - 1));
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream s;
  s << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "x" : "") << shape[i];
  s << ")";
  return s.str();
}

std::vector<std::size_t> with_channels(std::vector<std::size_t> spatial, std::size_t channels) {
  spatial.push_back(channels);
  return spatial;
}

}  // namespace nsmeta
