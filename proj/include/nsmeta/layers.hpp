#pragma once

// Differentiable layers with hand-written backward passes. Each forward
// optionally fills a cache; the matching backward reads it and throws
// StateError when the cache was never filled.
//
// Tensors have one or two spatial dimensions followed by channels.

#include <cstddef>
#include <span>

#include "nsmeta/tensor.hpp"

namespace nsmeta {

enum class Padding { periodic, zero };
enum class Activation { linear, relu, sigmoid };

/// Strided convolution
///   out[i, c'] = act(sum_k sum_c W[k][c][c'] x[i*stride + k - offset, c] + b[c'])
/// with k running over window^dim taps. Out-of-range x wraps (periodic) or
/// reads zero. Output spatial extent is input extent / stride.
struct ConvSpec {
  int dim = 1;
  int window = 1;
  int stride = 1;
  int offset = 0;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  Padding padding = Padding::periodic;
  Activation activation = Activation::linear;
  bool bias = true;

  std::size_t taps() const;
  std::size_t weight_size() const { return taps() * c_in * c_out; }
  std::size_t bias_size() const { return bias ? c_out : 0; }
};

struct ConvCache {
  Tensor input;
  Tensor output;  // post-activation
  bool ready = false;
};

Tensor conv_forward(const ConvSpec& spec, std::span<const double> weight,
                    std::span<const double> bias, const Tensor& x, ConvCache* cache = nullptr);

/// Returns dL/dx and accumulates dL/dW, dL/db (grad_bias may be empty when
/// the layer has no bias).
Tensor conv_backward(const ConvSpec& spec, std::span<const double> weight, const ConvCache& cache,
                     const Tensor& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias);

/// Average over non-overlapping 2 (or 2x2) cells.
Tensor avgpool2_forward(const Tensor& x);
Tensor avgpool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& input_shape);

/// Copies a single-channel tensor into `channels` identical channels.
Tensor replicate_channels(const Tensor& x, std::size_t channels);
/// Adjoint of replicate_channels: sums the channels.
Tensor sum_channels(const Tensor& x);
/// Mean over the channel dimension (output has one channel).
Tensor channel_average(const Tensor& x);
Tensor channel_average_backward(const Tensor& grad_out, std::size_t channels);

/// Channels [begin, begin + count) of x.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
/// Adds g into channels [begin, begin + g.channels()) of target.
void add_into_channels(Tensor& target, const Tensor& g, std::size_t begin);
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Sub-pixel reshape: input n x (2^dim * a) channels -> 2n x a channels,
///   out[2m + r, c] = in[m, r * a + c]            (1D)
///   out[2m1 + r1, 2m2 + r2, c] = in[m1, m2, (2 r1 + r2) a + c]   (2D)
Tensor depth_to_space(const Tensor& x);
/// Exact inverse (and adjoint) of depth_to_space.
Tensor space_to_depth(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
/// Gradients of a*b: returns (grad_out*b, grad_out*a).
std::pair<Tensor, Tensor> multiply_backward(const Tensor& a, const Tensor& b,
                                            const Tensor& grad_out);

}  // namespace nsmeta
