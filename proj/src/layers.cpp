#include "nsmeta/layers.hpp"

#include <cmath>
#include <sstream>

#include "nsmeta/errors.hpp"

namespace nsmeta {

namespace {

// Spatial geometry of a 1D or 2D tensor; 1D is treated as n x 1.
struct Grid {
  std::size_t n1 = 1, n2 = 1;
};

Grid grid_of(const Tensor& x, int dim, const char* where) {
  if (static_cast<int>(x.spatial_rank()) != dim) {
    std::ostringstream msg;
    msg << where << ": expected " << dim << " spatial dims, got tensor " << x.shape_string();
    throw ShapeError(msg.str());
  }
  Grid g;
  g.n1 = x.shape[0];
  if (dim == 2) g.n2 = x.shape[1];
  return g;
}

std::vector<std::size_t> spatial_shape(const Grid& g, int dim, std::size_t channels) {
  if (dim == 1) return {g.n1, channels};
  return {g.n1, g.n2, channels};
}

// Input index along one axis, or -1 when it falls in zero padding.
inline std::ptrdiff_t source_index(std::ptrdiff_t i, std::ptrdiff_t n, Padding pad) {
  if (i >= 0 && i < n) return i;
  if (pad == Padding::zero) return -1;
  const std::ptrdiff_t r = i % n;
  return r < 0 ? r + n : r;
}

void check_conv(const ConvSpec& s, const Tensor& x, std::span<const double> w,
                std::span<const double> b, Grid& in, Grid& out) {
  if (s.dim != 1 && s.dim != 2) throw ConfigError("conv: dim must be 1 or 2");
  if (s.window < 1 || s.stride < 1) throw ConfigError("conv: window and stride must be >= 1");
  in = grid_of(x, s.dim, "conv");
  if (x.channels() != s.c_in) {
    std::ostringstream msg;
    msg << "conv: input has " << x.channels() << " channels, layer expects " << s.c_in;
    throw ShapeError(msg.str());
  }
  const auto st = static_cast<std::size_t>(s.stride);
  if (in.n1 % st != 0 || (s.dim == 2 && in.n2 % st != 0))
    throw ShapeError("conv: spatial size " + x.shape_string() + " not divisible by stride");
  out.n1 = in.n1 / st;
  out.n2 = s.dim == 2 ? in.n2 / st : 1;
  if (w.size() != s.weight_size()) throw ShapeError("conv: weight size mismatch");
  if (b.size() != s.bias_size()) throw ShapeError("conv: bias size mismatch");
}

}  // namespace

std::size_t ConvSpec::taps() const {
  const auto w = static_cast<std::size_t>(window);
  return dim == 2 ? w * w : w;
}

Tensor conv_forward(const ConvSpec& s, std::span<const double> weight,
                    std::span<const double> bias, const Tensor& x, ConvCache* cache) {
  Grid in, out;
  check_conv(s, x, weight, bias, in, out);
  Tensor y(spatial_shape(out, s.dim, s.c_out));

  const int w2 = s.dim == 2 ? s.window : 1;
  const int off2 = s.dim == 2 ? s.offset : 0;
  const int st2 = s.dim == 2 ? s.stride : 1;
  const auto n1 = static_cast<std::ptrdiff_t>(in.n1), n2 = static_cast<std::ptrdiff_t>(in.n2);
  const std::size_t ci = s.c_in, co = s.c_out;

  for (std::size_t i1 = 0; i1 < out.n1; ++i1) {
    for (std::size_t i2 = 0; i2 < out.n2; ++i2) {
      double* acc = &y.data[(i1 * out.n2 + i2) * co];
      for (std::size_t c = 0; c < co; ++c) acc[c] = s.bias ? bias[c] : 0.0;
      for (int k1 = 0; k1 < s.window; ++k1) {
        const auto j1 = source_index(static_cast<std::ptrdiff_t>(i1) * s.stride + k1 - s.offset,
                                     n1, s.padding);
        if (j1 < 0) continue;
        for (int k2 = 0; k2 < w2; ++k2) {
          const auto j2 =
              source_index(static_cast<std::ptrdiff_t>(i2) * st2 + k2 - off2, n2, s.padding);
          if (j2 < 0) continue;
          const double* xin = &x.data[(static_cast<std::size_t>(j1) * in.n2 +
                                       static_cast<std::size_t>(j2)) * ci];
          const double* wk = &weight[(static_cast<std::size_t>(k1 * w2 + k2) * ci) * co];
          for (std::size_t a = 0; a < ci; ++a) {
            const double xv = xin[a];
            const double* wr = wk + a * co;
            for (std::size_t c = 0; c < co; ++c) acc[c] += wr[c] * xv;
          }
        }
      }
      if (s.activation == Activation::relu) {
        for (std::size_t c = 0; c < co; ++c) acc[c] = acc[c] > 0.0 ? acc[c] : 0.0;
      } else if (s.activation == Activation::sigmoid) {
        for (std::size_t c = 0; c < co; ++c) acc[c] = 1.0 / (1.0 + std::exp(-acc[c]));
      }
    }
  }
  if (cache) {
    cache->input = x;
    cache->output = y;
    cache->ready = true;
  }
  return y;
}

Tensor conv_backward(const ConvSpec& s, std::span<const double> weight, const ConvCache& cache,
                     const Tensor& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  if (!cache.ready) throw StateError("conv_backward: forward pass was not recorded");
  const Tensor& x = cache.input;
  Grid in, out;
  check_conv(s, x, weight, std::span<const double>(grad_bias.data(), grad_bias.size()), in, out);
  if (grad_out.shape != cache.output.shape) throw ShapeError("conv_backward: gradient shape mismatch");
  if (grad_weight.size() != weight.size()) throw ShapeError("conv_backward: weight gradient size");

  // Gradient at the pre-activation.
  Tensor gpre = grad_out;
  if (s.activation == Activation::relu) {
    for (std::size_t i = 0; i < gpre.size(); ++i)
      if (cache.output[i] <= 0.0) gpre[i] = 0.0;
  } else if (s.activation == Activation::sigmoid) {
    for (std::size_t i = 0; i < gpre.size(); ++i) {
      const double y = cache.output[i];
      gpre[i] *= y * (1.0 - y);
    }
  }

  Tensor gx(x.shape);
  const int w2 = s.dim == 2 ? s.window : 1;
  const int off2 = s.dim == 2 ? s.offset : 0;
  const int st2 = s.dim == 2 ? s.stride : 1;
  const auto n1 = static_cast<std::ptrdiff_t>(in.n1), n2 = static_cast<std::ptrdiff_t>(in.n2);
  const std::size_t ci = s.c_in, co = s.c_out;

  for (std::size_t i1 = 0; i1 < out.n1; ++i1) {
    for (std::size_t i2 = 0; i2 < out.n2; ++i2) {
      const double* g = &gpre.data[(i1 * out.n2 + i2) * co];
      if (s.bias)
        for (std::size_t c = 0; c < co; ++c) grad_bias[c] += g[c];
      for (int k1 = 0; k1 < s.window; ++k1) {
        const auto j1 = source_index(static_cast<std::ptrdiff_t>(i1) * s.stride + k1 - s.offset,
                                     n1, s.padding);
        if (j1 < 0) continue;
        for (int k2 = 0; k2 < w2; ++k2) {
          const auto j2 =
              source_index(static_cast<std::ptrdiff_t>(i2) * st2 + k2 - off2, n2, s.padding);
          if (j2 < 0) continue;
          const std::size_t px = static_cast<std::size_t>(j1) * in.n2 + static_cast<std::size_t>(j2);
          const double* xin = &x.data[px * ci];
          double* gxin = &gx.data[px * ci];
          const std::size_t wbase = (static_cast<std::size_t>(k1 * w2 + k2) * ci) * co;
          for (std::size_t a = 0; a < ci; ++a) {
            const double* wr = &weight[wbase + a * co];
            double* gw = &grad_weight[wbase + a * co];
            const double xv = xin[a];
            double sum = 0.0;
            for (std::size_t c = 0; c < co; ++c) {
              gw[c] += xv * g[c];
              sum += wr[c] * g[c];
            }
            gxin[a] += sum;
          }
        }
      }
    }
  }
  return gx;
}

Tensor avgpool2_forward(const Tensor& x) {
  const int dim = static_cast<int>(x.spatial_rank());
  const Grid in = grid_of(x, dim, "avgpool2");
  if (in.n1 % 2 != 0 || (dim == 2 && in.n2 % 2 != 0))
    throw ShapeError("avgpool2: odd spatial size " + x.shape_string());
  Grid out{in.n1 / 2, dim == 2 ? in.n2 / 2 : 1};
  const std::size_t c = x.channels();
  Tensor y(spatial_shape(out, dim, c));
  const std::size_t r2 = dim == 2 ? 2 : 1;
  const double scale = dim == 2 ? 0.25 : 0.5;
  for (std::size_t i1 = 0; i1 < out.n1; ++i1)
    for (std::size_t i2 = 0; i2 < out.n2; ++i2) {
      double* dst = &y.data[(i1 * out.n2 + i2) * c];
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < r2; ++b) {
          const double* src = &x.data[((2 * i1 + a) * in.n2 + (r2 * i2 + b)) * c];
          for (std::size_t k = 0; k < c; ++k) dst[k] += scale * src[k];
        }
    }
  return y;
}

Tensor avgpool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& input_shape) {
  Tensor gx(input_shape);
  const int dim = static_cast<int>(gx.spatial_rank());
  const Grid in = grid_of(gx, dim, "avgpool2_backward");
  Grid out{in.n1 / 2, dim == 2 ? in.n2 / 2 : 1};
  const std::size_t c = gx.channels();
  if (grad_out.shape != spatial_shape(out, dim, c))
    throw ShapeError("avgpool2_backward: gradient shape mismatch");
  const std::size_t r2 = dim == 2 ? 2 : 1;
  const double scale = dim == 2 ? 0.25 : 0.5;
  for (std::size_t i1 = 0; i1 < out.n1; ++i1)
    for (std::size_t i2 = 0; i2 < out.n2; ++i2) {
      const double* src = &grad_out.data[(i1 * out.n2 + i2) * c];
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < r2; ++b) {
          double* dst = &gx.data[((2 * i1 + a) * in.n2 + (r2 * i2 + b)) * c];
          for (std::size_t k = 0; k < c; ++k) dst[k] += scale * src[k];
        }
    }
  return gx;
}

Tensor replicate_channels(const Tensor& x, std::size_t channels) {
  if (x.channels() != 1) throw ShapeError("replicate_channels: input must have one channel");
  std::vector<std::size_t> shape = x.shape;
  shape.back() = channels;
  Tensor y(shape);
  for (std::size_t p = 0; p < x.size(); ++p)
    for (std::size_t c = 0; c < channels; ++c) y.data[p * channels + c] = x.data[p];
  return y;
}

Tensor sum_channels(const Tensor& x) {
  std::vector<std::size_t> shape = x.shape;
  const std::size_t c = shape.back();
  shape.back() = 1;
  Tensor y(shape);
  for (std::size_t p = 0; p < y.size(); ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += x.data[p * c + k];
    y.data[p] = s;
  }
  return y;
}

Tensor channel_average(const Tensor& x) {
  Tensor y = sum_channels(x);
  const double inv = 1.0 / static_cast<double>(x.channels());
  for (double& v : y.data) v *= inv;
  return y;
}

Tensor channel_average_backward(const Tensor& grad_out, std::size_t channels) {
  Tensor g = replicate_channels(grad_out, channels);
  const double inv = 1.0 / static_cast<double>(channels);
  for (double& v : g.data) v *= inv;
  return g;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t c = x.channels();
  if (begin + count > c) throw ShapeError("slice_channels: range exceeds channel count");
  std::vector<std::size_t> shape = x.shape;
  shape.back() = count;
  Tensor y(shape);
  const std::size_t px = x.pixels();
  for (std::size_t p = 0; p < px; ++p)
    for (std::size_t k = 0; k < count; ++k) y.data[p * count + k] = x.data[p * c + begin + k];
  return y;
}

void add_into_channels(Tensor& target, const Tensor& g, std::size_t begin) {
  const std::size_t c = target.channels(), count = g.channels();
  if (begin + count > c || g.pixels() != target.pixels())
    throw ShapeError("add_into_channels: shape mismatch");
  const std::size_t px = target.pixels();
  for (std::size_t p = 0; p < px; ++p)
    for (std::size_t k = 0; k < count; ++k) target.data[p * c + begin + k] += g.data[p * count + k];
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.pixels() != b.pixels() || a.spatial_rank() != b.spatial_rank())
    throw ShapeError("concat_channels: spatial shapes differ");
  std::vector<std::size_t> shape = a.shape;
  shape.back() = a.channels() + b.channels();
  Tensor y(shape);
  add_into_channels(y, a, 0);
  add_into_channels(y, b, a.channels());
  return y;
}

Tensor depth_to_space(const Tensor& x) {
  const int dim = static_cast<int>(x.spatial_rank());
  const Grid in = grid_of(x, dim, "depth_to_space");
  const std::size_t groups = dim == 2 ? 4 : 2;
  if (x.channels() % groups != 0) throw ShapeError("depth_to_space: channels not divisible");
  const std::size_t a = x.channels() / groups;
  Grid out{2 * in.n1, dim == 2 ? 2 * in.n2 : 1};
  Tensor y(spatial_shape(out, dim, a));
  const std::size_t r2max = dim == 2 ? 2 : 1;
  for (std::size_t m1 = 0; m1 < in.n1; ++m1)
    for (std::size_t m2 = 0; m2 < in.n2; ++m2)
      for (std::size_t r1 = 0; r1 < 2; ++r1)
        for (std::size_t r2 = 0; r2 < r2max; ++r2) {
          const std::size_t r = r1 * r2max + r2;
          const double* src = &x.data[(m1 * in.n2 + m2) * x.channels() + r * a];
          double* dst = &y.data[((2 * m1 + r1) * out.n2 + (r2max * m2 + r2)) * a];
          for (std::size_t c = 0; c < a; ++c) dst[c] = src[c];
        }
  return y;
}

Tensor space_to_depth(const Tensor& x) {
  const int dim = static_cast<int>(x.spatial_rank());
  const Grid in = grid_of(x, dim, "space_to_depth");
  if (in.n1 % 2 != 0 || (dim == 2 && in.n2 % 2 != 0))
    throw ShapeError("space_to_depth: odd spatial size");
  const std::size_t groups = dim == 2 ? 4 : 2;
  const std::size_t a = x.channels();
  Grid out{in.n1 / 2, dim == 2 ? in.n2 / 2 : 1};
  Tensor y(spatial_shape(out, dim, a * groups));
  const std::size_t r2max = dim == 2 ? 2 : 1;
  for (std::size_t m1 = 0; m1 < out.n1; ++m1)
    for (std::size_t m2 = 0; m2 < out.n2; ++m2)
      for (std::size_t r1 = 0; r1 < 2; ++r1)
        for (std::size_t r2 = 0; r2 < r2max; ++r2) {
          const std::size_t r = r1 * r2max + r2;
          double* dst = &y.data[(m1 * out.n2 + m2) * a * groups + r * a];
          const double* src = &x.data[((2 * m1 + r1) * in.n2 + (r2max * m2 + r2)) * a];
          for (std::size_t c = 0; c < a; ++c) dst[c] = src[c];
        }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw ShapeError("add: shapes differ");
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
  return y;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw ShapeError("multiply: shapes differ");
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.data[i];
  return y;
}

std::pair<Tensor, Tensor> multiply_backward(const Tensor& a, const Tensor& b,
                                            const Tensor& grad_out) {
  return {multiply(grad_out, b), multiply(grad_out, a)};
}

}  // namespace nsmeta
