#pragma once

// Flat parameter storage and first-order optimizers.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nsmeta {

/// Named parameter blocks stored back to back in one flat array, so
/// optimizers and gradient buffers are plain vectors of the same length.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  /// Appends a zero-initialized block; names must be unique.
  std::size_t add(const std::string& name, std::vector<std::size_t> shape);

  std::span<double> view(std::size_t id);
  std::span<const double> view(std::size_t id) const;
  /// The same block inside a gradient buffer of size().
  std::span<double> view(std::size_t id, std::span<double> buffer) const;
  std::span<const double> view(std::size_t id, std::span<const double> buffer) const;

  const Entry& entry(std::size_t id) const { return entries_.at(id); }
  const std::vector<Entry>& entries() const { return entries_; }
  /// Throws DataError when absent.
  std::size_t find(const std::string& name) const;

  std::size_t size() const { return values_.size(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<Entry> entries_;
  std::vector<double> values_;
};

struct NadamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Momentum warm-up: mu_t = beta1 (1 - 0.5 * 0.96^(t * schedule_decay)).
  /// Zero gives constant momentum beta1 / 2.
  double schedule_decay = 0.004;
};

/// Nesterov-accelerated Adam with the momentum schedule and bias
/// corrections of the original formulation.
class Nadam {
 public:
  explicit Nadam(NadamOptions options = {}) : opt_(options) {}

  /// Throws TrainingError on a non-finite gradient (parameters untouched).
  void step(std::span<double> params, std::span<const double> grads);

  std::int64_t steps() const { return t_; }
  const NadamOptions& options() const { return opt_; }
  void set_learning_rate(double lr) { opt_.learning_rate = lr; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  double momentum(std::int64_t t) const;

  NadamOptions opt_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
  double mu_product_ = 1.0;
};

/// Plain gradient descent, kept for debugging.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<double> params, std::span<const double> grads) const;

 private:
  double lr_;
};

/// Fills a block with N(0, stddev^2) draws.
void init_normal(std::span<double> block, double stddev, std::mt19937_64& rng);

}  // namespace nsmeta
