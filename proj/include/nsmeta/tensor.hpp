#pragma once

// Dense f64 tensors, row-major with the channel dimension last.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nsmeta {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t channels() const { return shape.empty() ? 0 : shape.back(); }
  /// Number of spatial dimensions (rank - 1).
  std::size_t spatial_rank() const { return shape.empty() ? 0 : shape.size() - 1; }
  /// Product of the spatial extents.
  std::size_t pixels() const;

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }

  bool all_finite() const;
  std::string shape_string() const;
};

/// Spatial shape with `channels` appended.
std::vector<std::size_t> with_channels(std::vector<std::size_t> spatial, std::size_t channels);

}  // namespace nsmeta
