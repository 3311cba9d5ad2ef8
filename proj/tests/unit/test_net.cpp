#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "nsmeta/errors.hpp"
#include "nsmeta/layers.hpp"
#include "nsmeta/optimizer.hpp"
#include "unit/test_util.hpp"

using namespace nsmeta;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, unsigned seed) {
  Tensor t(std::move(shape));
  t.data = testutil::random_vector(t.size(), seed);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct evaluation of the convolution sum, one output entry at a time.
Tensor naive_conv(const ConvSpec& s, const std::vector<double>& w, const std::vector<double>& b,
                  const Tensor& x) {
  const std::size_t n1 = x.shape[0], n2 = s.dim == 2 ? x.shape[1] : 1;
  const std::size_t m1 = n1 / s.stride, m2 = s.dim == 2 ? n2 / s.stride : 1;
  Tensor y(s.dim == 2 ? std::vector<std::size_t>{m1, m2, s.c_out}
                      : std::vector<std::size_t>{m1, s.c_out});
  const int w2 = s.dim == 2 ? s.window : 1;
  for (std::size_t i1 = 0; i1 < m1; ++i1)
    for (std::size_t i2 = 0; i2 < m2; ++i2)
      for (std::size_t co = 0; co < s.c_out; ++co) {
        double acc = s.bias ? b[co] : 0.0;
        for (int k1 = 0; k1 < s.window; ++k1)
          for (int k2 = 0; k2 < w2; ++k2)
            for (std::size_t ci = 0; ci < s.c_in; ++ci) {
              long j1 = static_cast<long>(i1 * s.stride) + k1 - s.offset;
              long j2 = s.dim == 2 ? static_cast<long>(i2 * s.stride) + k2 - s.offset : 0;
              const long nn1 = static_cast<long>(n1), nn2 = static_cast<long>(n2);
              if (s.padding == Padding::zero && (j1 < 0 || j1 >= nn1 || j2 < 0 || j2 >= nn2))
                continue;
              j1 = ((j1 % nn1) + nn1) % nn1;
              j2 = ((j2 % nn2) + nn2) % nn2;
              const double xv = x.data[(static_cast<std::size_t>(j1) * n2 +
                                        static_cast<std::size_t>(j2)) * s.c_in + ci];
              acc += w[((static_cast<std::size_t>(k1 * w2 + k2)) * s.c_in + ci) * s.c_out + co] * xv;
            }
        if (s.activation == Activation::relu) acc = std::max(acc, 0.0);
        if (s.activation == Activation::sigmoid) acc = 1.0 / (1.0 + std::exp(-acc));
        y.data[(i1 * m2 + i2) * s.c_out + co] = acc;
      }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Central difference of loss over every entry of `values`.
std::vector<double> finite_difference(std::vector<double>& values,
                                      const std::function<double()>& loss, double h = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = loss();
    values[i] = keep - h;
    const double down = loss();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

void check_conv_gradients(const ConvSpec& spec, std::vector<std::size_t> in_shape, unsigned seed) {
  Tensor x = random_tensor(std::move(in_shape), seed);
  std::vector<double> w = testutil::random_vector(spec.weight_size(), seed + 1);
  std::vector<double> b = testutil::random_vector(spec.bias_size(), seed + 2);
  ConvCache cache;
  const Tensor y = conv_forward(spec, w, b, x, &cache);
  const Tensor r = random_tensor(y.shape, seed + 3);
  std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
  const Tensor gx = conv_backward(spec, w, cache, r, gw, gb);

  auto loss = [&] { return dot(conv_forward(spec, w, b, x), r); };
  CHECK(testutil::rel_error(gx.data, finite_difference(x.data, loss)) < 1e-6);
  CHECK(testutil::rel_error(gw, finite_difference(w, loss)) < 1e-6);
  if (spec.bias) CHECK(testutil::rel_error(gb, finite_difference(b, loss)) < 1e-6);
}

}  // namespace

TEST_CASE("conv1d hand examples") {
  ConvSpec s;
  s.window = 3;
  s.bias = false;
  Tensor x({8, 1}, 1.0);
  const std::vector<double> w(3, 1.0);
  const Tensor y = conv_forward(s, w, {}, x);
  for (double v : y.data) CHECK(v == 3.0);

  s.activation = Activation::relu;
  s.bias = true;
  const std::vector<double> neg(3, -1.0), b{-0.5};
  for (double v : conv_forward(s, neg, b, x).data) CHECK(v == 0.0);
}

TEST_CASE("conv matches the naive loop") {
  for (Padding pad : {Padding::periodic, Padding::zero})
    for (Activation act : {Activation::linear, Activation::relu, Activation::sigmoid}) {
      ConvSpec s;
      s.window = 4;
      s.stride = 2;
      s.offset = 1;
      s.c_in = 2;
      s.c_out = 3;
      s.padding = pad;
      s.activation = act;
      const Tensor x = random_tensor({16, 2}, 3);
      const auto w = testutil::random_vector(s.weight_size(), 4);
      const auto b = testutil::random_vector(3, 5);
      CHECK(max_abs_diff(conv_forward(s, w, b, x), naive_conv(s, w, b, x)) < 1e-13);

      ConvSpec s2 = s;
      s2.dim = 2;
      s2.window = 3;
      const Tensor x2 = random_tensor({8, 8, 2}, 6);
      const auto w2 = testutil::random_vector(s2.weight_size(), 7);
      CHECK(max_abs_diff(conv_forward(s2, w2, b, x2), naive_conv(s2, w2, b, x2)) < 1e-13);
    }
}

TEST_CASE("conv2d simple cases") {
  ConvSpec s;
  s.dim = 2;
  s.window = 2;
  s.bias = false;
  const Tensor ones({4, 4, 1}, 1.0);
  for (double v : conv_forward(s, std::vector<double>(4, 1.0), {}, ones).data) CHECK(v == 4.0);

  ConvSpec id;
  id.dim = 2;
  id.c_in = 3;
  id.c_out = 3;
  id.bias = false;
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  const Tensor x = random_tensor({4, 4, 3}, 9);
  CHECK(conv_forward(id, eye, {}, x).data == x.data);

  CHECK_THROWS_AS(conv_forward(id, eye, {}, random_tensor({4, 4, 2}, 1)), ShapeError);
  ConvSpec strided = s;
  strided.stride = 2;
  CHECK_THROWS_AS(conv_forward(strided, std::vector<double>(4), {}, Tensor({5, 5, 1})), ShapeError);
}

TEST_CASE("conv gradients agree with finite differences") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    for (Padding pad : {Padding::periodic, Padding::zero})
      for (Activation act : {Activation::linear, Activation::relu, Activation::sigmoid}) {
        ConvSpec s;
        s.window = 3;
        s.stride = 1 + seed % 2;
        s.offset = 1;
        s.c_in = 2;
        s.c_out = 3;
        s.padding = pad;
        s.activation = act;
        check_conv_gradients(s, {8, 2}, 100 + seed * 10);
        s.dim = 2;
        check_conv_gradients(s, {4, 4, 2}, 200 + seed * 10);
      }
  }
}

TEST_CASE("single linear conv gradient is x^T delta") {
  ConvSpec s;
  s.window = 1;
  s.c_in = 2;
  s.c_out = 1;
  s.bias = false;
  const Tensor x = random_tensor({6, 2}, 1);
  const std::vector<double> w{0.3, -0.2};
  ConvCache cache;
  const Tensor y = conv_forward(s, w, {}, x, &cache);
  // loss = 0.5 |y|^2, delta = y
  std::vector<double> gw(2, 0.0);
  conv_backward(s, w, cache, y, gw, {});
  for (int c = 0; c < 2; ++c) {
    double expect = 0.0;
    for (int i = 0; i < 6; ++i) expect += x.data[i * 2 + c] * y.data[i];
    CHECK(gw[c] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("relu passes gradients through positive pre-activations") {
  ConvSpec s;
  s.activation = Activation::relu;
  const Tensor x({4, 1}, 2.0);
  const std::vector<double> w{1.0}, b{0.0};
  ConvCache cache;
  conv_forward(s, w, b, x, &cache);
  const Tensor g = random_tensor({4, 1}, 2);
  std::vector<double> gw(1, 0.0), gb(1, 0.0);
  CHECK(conv_backward(s, w, cache, g, gw, gb).data == g.data);
}

TEST_CASE("backward before forward is a state error") {
  ConvSpec s;
  ConvCache cache;
  std::vector<double> w{1.0}, gw(1), gb(1);
  CHECK_THROWS_AS(conv_backward(s, w, cache, Tensor({4, 1}), gw, gb), StateError);
}

TEST_CASE("periodic stride-1 conv commutes with cyclic shifts") {
  ConvSpec s;
  s.window = 5;
  s.offset = 2;
  s.c_in = 2;
  s.c_out = 2;
  s.activation = Activation::relu;
  const Tensor x = random_tensor({16, 2}, 4);
  const auto w = testutil::random_vector(s.weight_size(), 5);
  const auto b = testutil::random_vector(2, 6);
  auto shift = [](const Tensor& t, std::size_t k) {
    Tensor out(t.shape);
    const std::size_t n = t.shape[0], c = t.channels();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < c; ++a) out.data[((i + k) % n) * c + a] = t.data[i * c + a];
    return out;
  };
  for (std::size_t k : {1u, 3u, 7u})
    CHECK(conv_forward(s, w, b, shift(x, k)).data == shift(conv_forward(s, w, b, x), k).data);
  // Determinism.
  CHECK(conv_forward(s, w, b, x).data == conv_forward(s, w, b, x).data);
}

TEST_CASE("linear tensor ops and their adjoints") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    for (std::vector<std::size_t> shape :
         {std::vector<std::size_t>{8, 4}, std::vector<std::size_t>{4, 4, 8}}) {
      Tensor x = random_tensor(shape, seed);

      const Tensor p = avgpool2_forward(x);
      const Tensor rp = random_tensor(p.shape, seed + 50);
      const Tensor gp = avgpool2_backward(rp, x.shape);
      CHECK(testutil::rel_error(gp.data, finite_difference(x.data, [&] {
              return dot(avgpool2_forward(x), rp);
            })) < 1e-6);

      const Tensor d = depth_to_space(x);
      CHECK(space_to_depth(d).data == x.data);
      const Tensor rd = random_tensor(d.shape, seed + 60);
      CHECK(std::abs(dot(d, rd) - dot(x, space_to_depth(rd))) < 1e-12);

      const Tensor avg = channel_average(x);
      const Tensor ra = random_tensor(avg.shape, seed + 70);
      CHECK(testutil::rel_error(channel_average_backward(ra, x.channels()).data,
                                finite_difference(x.data, [&] {
                                  return dot(channel_average(x), ra);
                                })) < 1e-6);

      Tensor y = random_tensor(shape, seed + 80);
      const Tensor rm = random_tensor(shape, seed + 90);
      const auto [ga, gb] = multiply_backward(x, y, rm);
      CHECK(testutil::rel_error(ga.data, finite_difference(x.data, [&] {
              return dot(multiply(x, y), rm);
            })) < 1e-6);
      CHECK(testutil::rel_error(gb.data, finite_difference(y.data, [&] {
              return dot(multiply(x, y), rm);
            })) < 1e-6);
      CHECK(add(x, y).data[3] == x.data[3] + y.data[3]);

      const Tensor cat = concat_channels(x, y);
      CHECK(slice_channels(cat, x.channels(), y.channels()).data == y.data);
    }
  }
  const Tensor one = random_tensor({8, 1}, 1);
  const Tensor rep = replicate_channels(one, 3);
  CHECK(sum_channels(rep).data[2] == doctest::Approx(3 * one.data[2]));
  CHECK(testutil::rel_error(channel_average(rep).data, one.data) < 1e-15);
}

TEST_CASE("depth_to_space hand example") {
  // 1D: two positions, two sub-pixels, one channel.
  const Tensor x({2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(depth_to_space(x).data == std::vector<double>{1, 2, 3, 4});
  // 2D: one pixel, four sub-pixels (r1, r2) -> 2x2 image.
  const Tensor x2({1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  CHECK(depth_to_space(x2).data == std::vector<double>{1, 2, 3, 4});
  const Tensor x3({2, 4}, std::vector<double>{1, 10, 2, 20, 3, 30, 4, 40});
  // channels (r=0: c0,c1), (r=1: c0,c1)
  CHECK(depth_to_space(x3).data == std::vector<double>{1, 10, 2, 20, 3, 30, 4, 40});
}

TEST_CASE("parameter store") {
  ParameterStore ps;
  const auto a = ps.add("a", {2, 3});
  const auto b = ps.add("b", {4});
  CHECK(ps.size() == 10);
  CHECK(ps.view(b).size() == 4);
  CHECK(ps.entry(b).offset == 6);
  CHECK(ps.find("a") == a);
  CHECK_THROWS_AS(ps.find("c"), DataError);
  CHECK_THROWS_AS(ps.add("a", {1}), ConfigError);
}

TEST_CASE("nadam") {
  SUBCASE("one step on x^2/2") {
    NadamOptions o;
    o.learning_rate = 0.1;
    Nadam opt(o);
    std::vector<double> x{1.0};
    opt.step(x, std::vector<double>{x[0]});
    // tests/oracles/nadam_hand.py
    CHECK(std::abs(x[0] - 0.8943548232209129443695603) < 1e-14);
  }
  SUBCASE("200 steps converge") {
    NadamOptions o;
    o.learning_rate = 0.1;
    Nadam opt(o);
    std::vector<double> x{1.0};
    for (int i = 0; i < 200; ++i) opt.step(x, std::vector<double>{x[0]});
    CHECK(std::abs(x[0]) < 1e-2);
    CHECK(opt.steps() == 200);
  }
  SUBCASE("zero gradient leaves parameters") {
    Nadam opt;
    std::vector<double> x{0.5, -2.0};
    opt.step(x, std::vector<double>{1.0, 1.0});
    const auto after = x;
    const auto m = opt.first_moment();
    opt.step(x, std::vector<double>{0.0, 0.0});
    CHECK(opt.first_moment()[0] == doctest::Approx(0.9 * m[0]));
    // Momentum still moves the parameters, but only through the decayed moment.
    CHECK(std::abs(x[0] - after[0]) < 1e-3);
    Nadam fresh;
    std::vector<double> y{0.5};
    fresh.step(y, std::vector<double>{0.0});
    CHECK(y[0] == 0.5);
  }
  SUBCASE("non-finite gradients are rejected") {
    Nadam opt;
    std::vector<double> x{1.0};
    CHECK_THROWS_AS(opt.step(x, std::vector<double>{NAN}), TrainingError);
    CHECK(x[0] == 1.0);
  }
  SUBCASE("sgd") {
    Sgd sgd(0.5);
    std::vector<double> x{1.0};
    sgd.step(x, std::vector<double>{2.0});
    CHECK(x[0] == 0.0);
  }
}
