#include <cmath>
#include <random>

#include "doctest.h"
#include "petsr/error.hpp"
#include "petsr/nn/conv.hpp"
#include "petsr/reference/serial.hpp"

using namespace petsr;
using namespace petsr::nn;

namespace {

template <class T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<T> t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (T& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

ConvLayer<double> random_layer(int in, int out, std::uint64_t seed) {
  ConvLayer<double> l(in, out);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : l.weights) v = u(rng);
  for (double& v : l.bias) v = u(rng);
  return l;
}

double weighted_sum(const Tensor<double>& a, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * r.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv: forward examples") {
  const auto x = random_tensor<double>(2, 1, 6, 5, 1);
  ConvLayer<double> id(1, 1);
  id.weight(0, 0, 1, 1) = 1.0;
  CHECK(conv2d_forward(x, id.view()).data == x.data);

  ConvLayer<double> b(1, 2);
  b.bias = {0.25, -3.0};
  const auto yb = conv2d_forward(x, b.view());
  for (int n = 0; n < 2; ++n)
    for (int yy = 0; yy < 6; ++yy)
      for (int xx = 0; xx < 5; ++xx) {
        CHECK(yb.at(n, 0, yy, xx) == 0.25);
        CHECK(yb.at(n, 1, yy, xx) == -3.0);
      }

  Tensor<double> ones(1, 1, 3, 3, 1.0);
  ConvLayer<double> k(1, 1);
  k.weights.assign(9, 1.0);
  const auto o = conv2d_forward(ones, k.view());
  CHECK(o.at(0, 0, 1, 1) == 9.0);
  CHECK(o.at(0, 0, 0, 1) == 6.0);
  CHECK(o.at(0, 0, 1, 2) == 6.0);
  CHECK(o.at(0, 0, 0, 0) == 4.0);
  CHECK(o.at(0, 0, 2, 2) == 4.0);

  CHECK_THROWS_AS(conv2d_forward(random_tensor<double>(1, 2, 3, 3, 2), k.view()), Error);
}

TEST_CASE("conv: optimized forward equals the direct loops") {
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_tensor<double>(3, 2 + trial, 7 + trial, 9, 10 + trial);
    const auto l = random_layer(2 + trial, 4, 20 + trial);
    const auto a = conv2d_forward(x, l.view());
    const auto b = reference::conv2d_forward(x, l.view());
    double w = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a.data[i] - b.data[i]));
    CHECK(w < 1e-12);
  }
  // float path too
  const auto xf = random_tensor<float>(2, 3, 8, 8, 5);
  ConvLayer<float> lf(3, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(-1, 1);
  for (float& v : lf.weights) v = u(rng);
  const auto af = conv2d_forward(xf, lf.view()), bf = reference::conv2d_forward(xf, lf.view());
  float wf = 0.0f;
  for (std::size_t i = 0; i < af.size(); ++i) wf = std::max(wf, std::abs(af.data[i] - bf.data[i]));
  CHECK(wf < 1e-5f);
}

TEST_CASE("conv: backward") {
  const auto x = random_tensor<double>(1, 2, 5, 5, 3);
  auto l = random_layer(2, 3, 4);
  const auto r = random_tensor<double>(1, 3, 5, 5, 5);

  const auto zero = conv2d_backward(x, l.view(), Tensor<double>(1, 3, 5, 5));
  for (double v : zero.weights) CHECK(v == 0.0);
  for (double v : zero.bias) CHECK(v == 0.0);
  for (double v : zero.input.data) CHECK(v == 0.0);

  // loss = sum(conv(x) * r), so dL/dout = r
  const auto g = conv2d_backward(x, l.view(), r);
  const double h = 1e-6;
  double err = 0.0, scale = 0.0;
  auto track = [&](double analytic, double fd) {
    err = std::max(err, std::abs(analytic - fd));
    scale = std::max(scale, std::abs(fd));
  };
  for (std::size_t i = 0; i < l.weights.size(); ++i) {
    const double v = l.weights[i];
    l.weights[i] = v + h;
    const double fp = weighted_sum(conv2d_forward(x, l.view()), r);
    l.weights[i] = v - h;
    const double fm = weighted_sum(conv2d_forward(x, l.view()), r);
    l.weights[i] = v;
    track(g.weights[i], (fp - fm) / (2 * h));
  }
  for (std::size_t i = 0; i < l.bias.size(); ++i) {
    const double v = l.bias[i];
    l.bias[i] = v + h;
    const double fp = weighted_sum(conv2d_forward(x, l.view()), r);
    l.bias[i] = v - h;
    const double fm = weighted_sum(conv2d_forward(x, l.view()), r);
    l.bias[i] = v;
    track(g.bias[i], (fp - fm) / (2 * h));
  }
  auto xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp.data[i] = x.data[i] + h;
    const double fp = weighted_sum(conv2d_forward(xp, l.view()), r);
    xp.data[i] = x.data[i] - h;
    const double fm = weighted_sum(conv2d_forward(xp, l.view()), r);
    xp.data[i] = x.data[i];
    track(g.input.data[i], (fp - fm) / (2 * h));
  }
  CHECK(err / scale < 1e-6);

  // bias gradient is the per-channel sum of grad_out
  for (int o = 0; o < 3; ++o) {
    double s = 0.0;
    for (int i = 0; i < 25; ++i) s += r.data[o * 25 + i];
    CHECK(g.bias[o] == doctest::Approx(s).epsilon(1e-14));
  }

  ConvLayer<double> id(1, 1);
  id.weight(0, 0, 1, 1) = 1.0;
  const auto go = random_tensor<double>(2, 1, 4, 6, 7);
  CHECK(conv2d_backward(random_tensor<double>(2, 1, 4, 6, 8), id.view(), go).input.data == go.data);

  CHECK_THROWS_AS(conv2d_backward(x, l.view(), Tensor<double>(1, 2, 5, 5)), Error);
}

TEST_CASE("relu") {
  Tensor<double> x(1, 1, 1, 2);
  x.data = {-1.0, 2.0};
  CHECK(relu_forward(x).data == std::vector<double>{0.0, 2.0});
  Tensor<double> neg(1, 2, 3, 3, -0.5);
  for (double v : relu_forward(neg).data) CHECK(v == 0.0);
  for (double v : relu_backward(neg, Tensor<double>(1, 2, 3, 3, 1.0)).data) CHECK(v == 0.0);

  // finite differences away from the kink
  auto z = random_tensor<double>(1, 2, 4, 4, 9);
  for (double& v : z.data)
    if (std::abs(v) < 1e-3) v = 0.5;
  const auto r = random_tensor<double>(1, 2, 4, 4, 10);
  const auto g = relu_backward(z, r);
  const double h = 1e-7;
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto p = z, m = z;
    p.data[i] += h;
    m.data[i] -= h;
    const double fd = (weighted_sum(relu_forward(p), r) - weighted_sum(relu_forward(m), r)) / (2 * h);
    err = std::max(err, std::abs(fd - g.data[i]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(err < 1e-6);
}

TEST_CASE("l1 loss") {
  auto a = random_tensor<double>(1, 1, 3, 3, 11);
  CHECK(l1_loss(a, a).loss == 0.0);
  Tensor<double> p(1, 1, 1, 2), t(1, 1, 1, 2);
  p.data = {1.0, 3.0};
  t.data = {0.0, 1.0};
  CHECK(l1_loss(p, t).loss == 1.5);

  auto b = random_tensor<double>(1, 1, 3, 3, 12);
  b.data[4] = a.data[4];
  const auto lg = l1_loss(a, b);
  const double n = 9.0;
  for (std::size_t i = 0; i < 9; ++i) {
    const double g = lg.grad.data[i];
    CHECK((g == 1.0 / n || g == -1.0 / n || g == 0.0));
    if (i == 4) CHECK(g == 0.0);
  }
  CHECK_THROWS_AS(l1_loss(a, Tensor<double>(1, 1, 3, 2)), Error);
}
