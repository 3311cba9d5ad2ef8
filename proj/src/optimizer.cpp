#include "nsmeta/optimizer.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "nsmeta/errors.hpp"

namespace nsmeta {

std::size_t ParameterStore::add(const std::string& name, std::vector<std::size_t> shape) {
  for (const auto& e : entries_)
    if (e.name == name) throw ConfigError("ParameterStore: duplicate parameter " + name);
  Entry e;
  e.name = name;
  e.size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  e.shape = std::move(shape);
  e.offset = values_.size();
  values_.resize(values_.size() + e.size, 0.0);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::span<double> ParameterStore::view(std::size_t id) {
  const auto& e = entries_.at(id);
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParameterStore::view(std::size_t id) const {
  const auto& e = entries_.at(id);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

std::span<double> ParameterStore::view(std::size_t id, std::span<double> buffer) const {
  if (buffer.size() != values_.size()) throw ShapeError("ParameterStore: gradient buffer size");
  const auto& e = entries_.at(id);
  return buffer.subspan(e.offset, e.size);
}

std::span<const double> ParameterStore::view(std::size_t id, std::span<const double> buffer) const {
  if (buffer.size() != values_.size()) throw ShapeError("ParameterStore: gradient buffer size");
  const auto& e = entries_.at(id);
  return buffer.subspan(e.offset, e.size);
}

std::size_t ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw DataError("ParameterStore: no parameter named " + name);
}

double Nadam::momentum(std::int64_t t) const {
  return opt_.beta1 * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) * opt_.schedule_decay));
}

void Nadam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ShapeError("Nadam: parameter/gradient size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw TrainingError("Nadam: non-finite gradient");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw ShapeError("Nadam: parameter count changed between steps");

  ++t_;
  const double mu_t = momentum(t_);
  const double mu_next = momentum(t_ + 1);
  mu_product_ *= mu_t;
  const double mu_product_next = mu_product_ * mu_next;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double v_correction = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double g_scale = (1.0 - mu_t) / (1.0 - mu_product_);
  const double m_scale = mu_next / (1.0 - mu_product_next);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double denom = std::sqrt(v_[i] / v_correction) + opt_.epsilon;
    params[i] -= opt_.learning_rate * (g_scale * g + m_scale * m_[i]) / denom;
  }
}

void Sgd::step(std::span<double> params, std::span<const double> grads) const {
  if (params.size() != grads.size()) throw ShapeError("Sgd: parameter/gradient size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw TrainingError("Sgd: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
}

void init_normal(std::span<double> block, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : block) x = dist(rng);
}

}  // namespace nsmeta
