#include <cmath>
#include <random>

#include "doctest.h"
#include "petsr/error.hpp"
#include "petsr/nn/network.hpp"

using namespace petsr;
using namespace petsr::nn;

namespace {

const Variant kAll[] = {Variant::S1, Variant::S2, Variant::S3, Variant::S4,
                        Variant::V1, Variant::V2, Variant::V3, Variant::V4};

template <class T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<T> t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (T& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

double l1(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

std::vector<std::int8_t> signs(const Tensor<double>& a, const Tensor<double>& b) {
  std::vector<std::int8_t> s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s[i] = (a.data[i] > b.data[i]) - (a.data[i] < b.data[i]);
  return s;
}

}  // namespace

TEST_CASE("network: variant table") {
  CHECK(build_network<float>(NetworkSpec::for_variant(Variant::S1), 1).parameter_count() == 38145);

  const Network<float> v1(NetworkSpec::for_variant(Variant::V1));
  CHECK(v1.conv_layer_count() == 20);
  CHECK(v1.relu_count() == 19);

  const Network<float> s4(NetworkSpec::for_variant(Variant::S4));
  REQUIRE(s4.layers().size() == 4 + 1 + 1);
  CHECK(s4.layers()[4].name == "fusion");
  CHECK(s4.layers()[4].in_ch == 256);
  CHECK(s4.layers().back().out_ch == 1);
  CHECK_FALSE(s4.layers().back().relu);

  for (Variant v : kAll) {
    const NetworkSpec s = NetworkSpec::for_variant(v);
    s.validate();
    const int nb = static_cast<int>(s.inputs.size());
    const std::size_t F = 64;
    const std::size_t expect = nb * (9 * F + F) + (nb * F * F * 9 + F) +
                               (s.depth - 3) * (F * F * 9 + F) + (F * 9 + 1);
    const Network<float> net(s);
    CHECK(net.parameter_count() == expect);
    CHECK(net.conv_layer_count() == s.depth);
    CHECK(s.inputs.front() == InputChannel::LrPet);
    CHECK(s.uses(InputChannel::HrMr) == (v == Variant::S2 || v == Variant::S4 || v == Variant::V2 || v == Variant::V4));
    CHECK(s.uses(InputChannel::Radial) == (v == Variant::S3 || v == Variant::S4 || v == Variant::V3 || v == Variant::V4));
    CHECK(variant_from_string(to_string(v)) == v);
  }
  CHECK(NetworkSpec::for_variant(Variant::V3).depth == 20);
  CHECK(NetworkSpec::for_variant(Variant::S3).inputs.size() == 3);
  CHECK(NetworkSpec::for_variant(Variant::V4).inputs.size() == 4);

  NetworkSpec bad = NetworkSpec::for_variant(Variant::S2);
  bad.inputs.pop_back();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = NetworkSpec::for_variant(Variant::S1);
  bad.depth = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(variant_from_string("S9"), Error);
}

TEST_CASE("network: initialization") {
  const auto a = build_network<float>(NetworkSpec::for_variant(Variant::S2), 7);
  const auto b = build_network<float>(NetworkSpec::for_variant(Variant::S2), 7);
  const auto c = build_network<float>(NetworkSpec::for_variant(Variant::S2), 8);
  CHECK(a.params() == b.params());
  CHECK(a.params() != c.params());
  const LayerInfo& head = a.layers().back();
  for (std::size_t i = head.weight_offset; i < a.parameter_count(); ++i) CHECK(a.params()[i] == 0.0f);
  // He scaling: fan-in 9 for a branch
  const LayerInfo& br = a.layers()[0];
  double s2 = 0.0;
  for (std::size_t i = 0; i < br.weight_count(); ++i) s2 += double(a.params()[br.weight_offset + i]) * a.params()[br.weight_offset + i];
  CHECK(std::sqrt(s2 / br.weight_count()) == doctest::Approx(std::sqrt(2.0 / 9)).epsilon(0.2));
}

TEST_CASE("network: residual identity and shapes") {
  for (Variant v : kAll) {
    const NetworkSpec s = NetworkSpec::for_variant(v, 8);
    const int nc = static_cast<int>(s.inputs.size());
    const auto zero = build_network<float>(s, 3);
    const auto x = random_tensor<float>(2, nc, 9, 7, 4, 0, 1);
    const auto out0 = zero.forward_sr(x);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 63; ++i) CHECK(out0.sr.data[n * 63 + i] == x.data[n * nc * 63 + i]);

    const auto net = build_network<float>(s, 3, false);
    for (auto [h, w] : {std::pair{9, 7}, std::pair{1, 1}, std::pair{2, 5}, std::pair{16, 16}}) {
      const auto xi = random_tensor<float>(2, nc, h, w, 5, 0, 1);
      const auto o = net.forward_sr(xi);
      CHECK(o.residual.n == 2);
      CHECK(o.residual.c == 1);
      CHECK(o.residual.h == h);
      CHECK(o.residual.w == w);
      CHECK(o.sr.h == h);
      const std::size_t hw = static_cast<std::size_t>(h) * w;
      for (int n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < hw; ++i)
          CHECK(o.sr.data[n * hw + i] == xi.data[n * nc * hw + i] + o.residual.data[n * hw + i]);
    }
    CHECK_THROWS_AS(net.forward(random_tensor<float>(1, nc + 1, 4, 4, 6)), Error);
  }
}

TEST_CASE("network: gradient check for every variant") {
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    const NetworkSpec s = NetworkSpec::for_variant(v, 4);
    const int nc = static_cast<int>(s.inputs.size());
    auto net = build_network<double>(s, 11, false);
    // scale the weights up a little so the deep variants keep a signal
    if (s.depth == 20)
      for (double& p : net.params()) p *= 1.3;
    const auto x = random_tensor<double>(2, nc, 11, 11, 12, 0, 1);
    const auto t = random_tensor<double>(2, 1, 11, 11, 13, -0.5, 0.5);
    std::vector<double> grad;
    const double loss = net.loss_and_gradient(x, t, grad);
    CHECK(loss == doctest::Approx(l1(net.forward(x), t)).epsilon(1e-12));
    REQUIRE(grad.size() == net.parameter_count());

    const auto pattern0 = net.activation_pattern(x);
    const auto sign0 = signs(net.forward(x), t);
    const double h = 1e-6;
    double err = 0.0, scale = 0.0;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < net.parameter_count(); ++i) {
      const double p = net.params()[i];
      net.params()[i] = p + h;
      const auto rp = net.forward(x);
      const bool kink_p = net.activation_pattern(x) != pattern0 || signs(rp, t) != sign0;
      net.params()[i] = p - h;
      const auto rm = net.forward(x);
      const bool kink_m = net.activation_pattern(x) != pattern0 || signs(rm, t) != sign0;
      net.params()[i] = p;
      if (kink_p || kink_m) {
        ++skipped;
        continue;
      }
      const double fd = (l1(rp, t) - l1(rm, t)) / (2 * h);
      err = std::max(err, std::abs(fd - grad[i]));
      scale = std::max(scale, std::abs(fd));
    }
    CHECK(skipped < net.parameter_count() / 20);
    REQUIRE(scale > 0.0);
    CHECK(err / scale < 1e-5);
  }
}

TEST_CASE("network: receptive field of the deep variant") {
  const NetworkSpec s = NetworkSpec::for_variant(Variant::V1, 8);
  CHECK(s.receptive_field() == 41);
  auto net = build_network<double>(s, 21, false);
  for (double& p : net.params()) p *= 1.5;
  // positive inputs and biases keep most ReLUs open
  const int n = 61, c = 30;
  auto x = random_tensor<double>(1, 1, n, n, 22, 0.5, 1.0);
  const auto y0 = net.forward(x);
  x.at(0, 0, c, c) += 0.5;
  const auto y1 = net.forward(x);
  int lo_x = n, hi_x = -1, lo_y = n, hi_y = -1;
  for (int yy = 0; yy < n; ++yy)
    for (int xx = 0; xx < n; ++xx)
      if (y1.at(0, 0, yy, xx) != y0.at(0, 0, yy, xx)) {
        lo_x = std::min(lo_x, xx), hi_x = std::max(hi_x, xx);
        lo_y = std::min(lo_y, yy), hi_y = std::max(hi_y, yy);
      }
  REQUIRE(hi_x >= 0);
  CHECK(lo_x >= c - 20);
  CHECK(hi_x <= c + 20);
  CHECK(lo_y >= c - 20);
  CHECK(hi_y <= c + 20);
  // the influence does reach well beyond the shallow network's 7x7 window
  CHECK(hi_x - lo_x + 1 > 7);
}

TEST_CASE("network: translation equivariance without coordinate channels") {
  for (Variant v : {Variant::S1, Variant::S2, Variant::V1, Variant::V2}) {
    CAPTURE(to_string(v));
    const NetworkSpec s = NetworkSpec::for_variant(v, 6);
    const int nc = static_cast<int>(s.inputs.size());
    const auto net = build_network<double>(s, 31, false);
    const int n = s.depth == 20 ? 56 : 24;
    const auto a = random_tensor<double>(1, nc, n, n, 32, 0, 1);
    auto b = random_tensor<double>(1, nc, n, n, 33, 0, 1);
    for (int ch = 0; ch < nc; ++ch)
      for (int yy = 0; yy < n; ++yy)
        for (int xx = 0; xx + 1 < n; ++xx) b.at(0, ch, yy, xx) = a.at(0, ch, yy, xx + 1);
    const auto ya = net.forward(a), yb = net.forward(b);
    const int d = s.depth;
    double worst = 0.0;
    int count = 0;
    for (int yy = d; yy < n - d; ++yy)
      for (int xx = d; xx + 1 < n - d; ++xx) {
        worst = std::max(worst, std::abs(yb.at(0, 0, yy, xx) - ya.at(0, 0, yy, xx + 1)));
        ++count;
      }
    CHECK(count > 0);
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("network: float and double agree") {
  const auto nd = build_network<double>(NetworkSpec::for_variant(Variant::S3, 8), 41, false);
  const auto nf = nd.cast<float>();
  const auto x = random_tensor<double>(2, 3, 12, 12, 42, 0, 1);
  const auto yd = nd.forward(x);
  const auto yf = nf.forward(tensor_cast<float>(x));
  double w = 0.0;
  for (std::size_t i = 0; i < yd.size(); ++i) w = std::max(w, std::abs(yd.data[i] - yf.data[i]));
  CHECK(w < 1e-4);
}
