#pragma once

// Meta-learning network: per-level ConvNets map eta to the diagonal vectors
// of a nonstandard form, and a learnable wavelet transform pair applies that
// form to f. One implementation covers 1D (n) and 2D (n x n) grids.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsmeta/layers.hpp"
#include "nsmeta/nsform.hpp"
#include "nsmeta/nsform_2d.hpp"
#include "nsmeta/optimizer.hpp"
#include "nsmeta/tensor.hpp"

namespace nsmeta {

struct ModelConfig {
  int dim = 1;
  int L = 6;
  int L0 = 3;
  int p = 3;
  int alpha = 5;
  int K = 5;
  int nb = 3;
  /// Padding of the eta ConvNets; the f path is always periodic.
  Padding padding = Padding::periodic;
  /// Elliptic mode: symmetrized blocks and an IWT tied to the FWT adjoint.
  bool symmetric = true;
  double init_noise = 1e-2;
  std::uint64_t seed = 0;
  /// eta is fed to the ConvNets as (eta - eta_shift) / eta_scale.
  double eta_shift = 0.0;
  double eta_scale = 1.0;
  /// Fixed factor on every ConvNet output, matching C to the operator's magnitude.
  double output_scale = 1.0;

  std::size_t side() const { return std::size_t{1} << L; }
  std::size_t grid_points() const { return dim == 2 ? side() * side() : side(); }
  /// Wavelet types per level plus the scaling part: 2 in 1D, 4 in 2D.
  int types() const { return dim == 2 ? 4 : 2; }
  int blocks() const { return types() * types() - 1; }
};

/// Throws ConfigError for inconsistent hyperparameters.
void validate(const ModelConfig& cfg);

/// Plain-text "key = value" architecture descriptor and its parser.
std::string describe(const ModelConfig& cfg);
ModelConfig parse_descriptor(const std::string& text);

/// One column of C^(l): block (t_out, t_in) in row-major order over the
/// types with (T-1, T-1) skipped, channel, periodic offset. Coarse columns
/// (level L0 only) hold the dense block of each channel as full periodic
/// diagonals.
struct ChannelColumn {
  int block = 0;
  int channel = 0;
  Offset2 offset{0, 0};
  bool coarse = false;
};

/// Per-level diagonal arrays; levels[l - L0] has shape (2^l [x 2^l], n_c).
struct ChannelCollection {
  std::vector<Tensor> levels;
};

class MetaModel {
 public:
  explicit MetaModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::size_t columns(int level) const;
  std::vector<ChannelColumn> layout(int level) const;

  /// Random init, with the FWT (and untied IWT) at the exact Daubechies
  /// filters plus N(0, init_noise^2) perturbations.
  void initialize(std::uint64_t seed);
  /// Sets the f-path weights to the exact filters with no noise.
  void set_exact_wavelets();

  struct EtaCache {
    std::vector<std::vector<ConvCache>> convs;  // [level][layer], output conv last
    std::vector<std::vector<std::vector<std::size_t>>> pool_inputs;
    bool ready = false;
  };
  struct FCache {
    std::vector<ConvCache> fwt;  // index l - L0
    std::vector<ConvCache> iwt;
    std::vector<Tensor> coeffs;  // FWT outputs z^(l)
    bool ready = false;
  };

  /// eta -> C (raw ConvNet output, before symmetrization).
  ChannelCollection eta_to_C(const Tensor& eta, EtaCache* cache = nullptr) const;
  /// Accumulates parameter gradients given dL/dC_raw.
  void eta_backward(const EtaCache& cache, const ChannelCollection& grad_C,
                    std::span<double> grad) const;

  /// Enforces D3 = D2^T, D1 = (D1 + D1^T)/2 and a symmetric coarse block
  /// per channel (all transposed block pairs in 2D).
  ChannelCollection symmetrize(const ChannelCollection& c) const;
  ChannelCollection symmetrize_backward(const ChannelCollection& grad) const;

  /// C used by the band products: symmetrized in symmetric mode.
  ChannelCollection effective_C(const ChannelCollection& raw) const;
  ChannelCollection effective_C_backward(const ChannelCollection& grad) const;

  /// Linear f path: FWT, band products with C, IWT, channel average.
  Tensor apply_C(const ChannelCollection& C, const Tensor& f, FCache* cache = nullptr) const;
  /// Returns dL/dC and accumulates FWT/IWT parameter gradients.
  ChannelCollection apply_C_backward(const ChannelCollection& C, const FCache& cache,
                                     const Tensor& grad_u, std::span<double> grad) const;

  /// Full network. Throws InferenceError on non-finite output.
  Tensor forward(const Tensor& eta, const Tensor& f) const;

  /// Dense G with column j = forward(eta, e_j).
  Eigen::MatrixXd export_operator(const Tensor& eta) const;
  Eigen::MatrixXd export_operator_C(const ChannelCollection& C) const;

  /// IWT weights of a level: stored, or derived from the FWT in symmetric mode.
  std::vector<double> iwt_weights(int level) const;

  /// Diagonals of a nonstandard form copied into every channel.
  ChannelCollection channels_from_form(const NonstandardForm& ns) const;
  ChannelCollection channels_from_form(const NonstandardForm2D& ns) const;

  Tensor make_eta_tensor(std::span<const double> values) const;

  ChannelCollection zeros_like_C() const;

  std::size_t fwt_id(int level) const { return fwt_ids_.at(static_cast<std::size_t>(level - cfg_.L0)); }

 private:
  struct LevelLayout {
    std::size_t n = 0;       // side at this level
    std::size_t pixels = 0;  // n or n*n
    std::vector<Offset2> band;
    std::vector<std::size_t> band_shift;  // [pixel * band.size() + j]
    std::vector<std::size_t> band_neg;    // index of -offset
    std::vector<Offset2> full;            // coarse level only
    std::vector<std::size_t> full_shift;
    std::vector<std::size_t> full_neg;
  };
  struct NetLayers {
    std::vector<ConvSpec> convs;
    std::vector<int> pools_after;  // pools following convs[i]
    std::vector<std::size_t> weight_ids, bias_ids;
  };

  ConvSpec fwt_spec() const;
  ConvSpec iwt_spec() const;
  std::size_t band_col(int block, int channel, std::size_t j, const LevelLayout& lay) const;
  std::size_t coarse_col(int channel, std::size_t j, const LevelLayout& lay) const;
  void band_forward(int level, const Tensor& C, const Tensor& z, Tensor& y) const;
  void band_backward(int level, const Tensor& C, const Tensor& z, const Tensor& gy, Tensor& gC,
                     Tensor& gz) const;
  void set_exact_fwt(std::span<double> w) const;
  void fwt_to_iwt(std::span<const double> wf, std::span<double> wi) const;
  void iwt_to_fwt_grad(std::span<const double> gwi, std::span<double> gwf) const;

  ModelConfig cfg_;
  ParameterStore params_;
  std::vector<LevelLayout> layouts_;
  std::vector<NetLayers> nets_;
  std::vector<std::size_t> fwt_ids_, iwt_ids_;
};

}  // namespace nsmeta
