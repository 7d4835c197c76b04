#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "petsr/error.hpp"
#include "petsr/json_io.hpp"
#include "petsr/nn/adam.hpp"
#include "petsr/nn/checkpoint.hpp"
#include "petsr/nn/train.hpp"

using namespace petsr;
using namespace petsr::nn;

namespace {

PatchSet smooth_patches(int n, int p, std::uint64_t seed) {
  PatchSet s;
  s.channels = {InputChannel::LrPet};
  s.inputs = Tensor<float>(n, 1, p, p);
  s.targets = Tensor<float>(n, 1, p, p);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < n; ++k) {
    const double fx = 0.2 + 0.3 * u(rng), fy = 0.2 + 0.3 * u(rng), ph = 6.0 * u(rng);
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) {
        const double lr = 0.5 + 0.4 * std::sin(fx * x + ph) * std::cos(fy * y);
        s.inputs.at(k, 0, y, x) = static_cast<float>(lr);
        s.targets.at(k, 0, y, x) = static_cast<float>(0.3 * (lr - 0.5) * (lr - 0.5) - 0.05);
      }
    s.meta.push_back({k, 0, 0, 0, 0.0, 0.0});
  }
  return s;
}

}  // namespace

TEST_CASE("adam: examples") {
  std::vector<double> p{1.0, -2.0, 0.5};
  AdamState<double> st(3, 1e-3);
  adam_step(p, {0.0, 0.0, 0.0}, st);
  CHECK(p == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(st.t == 1);

  std::vector<double> q{1.0, -2.0, 0.5};
  AdamState<double> s1(3, 1e-3);
  const std::vector<double> g{0.3, -5.0, 1e-2};
  adam_step(q, g, s1);
  const std::vector<double> start{1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i) {
    const double delta = q[i] - start[i];
    CHECK(std::abs(delta + 1e-3 * (g[i] > 0 ? 1 : -1)) < 1e-3 * 1e-4);
  }

  // hand-rolled two-step scalar oracle
  double x = 0.7, m = 0.0, v = 0.0;
  const double lr = 3e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double grads[2] = {0.25, -0.1};
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * grads[t - 1];
    v = b2 * v + (1 - b2) * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
  }
  std::vector<double> y{0.7};
  AdamState<double> s2(1, lr);
  adam_step(y, {0.25}, s2);
  adam_step(y, {-0.1}, s2);
  CHECK(std::abs(y[0] - x) < 1e-12);
  CHECK(s2.t == 2);

  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(adam_step(wrong, {1.0, 2.0}, s2), Error);
}

TEST_CASE("train: a single patch can be memorized") {
  const PatchSet one = smooth_patches(1, 16, 1);
  auto net = build_network<float>(NetworkSpec::for_variant(Variant::S1), 2);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 3;
  const TrainHistory h = train(net, one, cfg);
  REQUIRE(h.epochs.size() == 201);
  CHECK(h.epochs[0].epoch == 0);
  CHECK(std::isnan(h.epochs[0].val_loss));
  CHECK(h.epochs.back().train_loss < 0.1 * h.epochs[0].train_loss);
  CHECK(evaluate_loss(net, one) < 0.1 * h.epochs[0].train_loss);
}

TEST_CASE("train: determinism, learning rate zero, validation loss") {
  const PatchSet set = smooth_patches(23, 12, 4);
  const PatchSet val = smooth_patches(5, 12, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 10;
  cfg.seed = 9;
  auto a = build_network<float>(NetworkSpec::for_variant(Variant::S1, 16), 6);
  auto b = a;
  const auto ha = train(a, set, cfg, &val);
  const auto hb = train(b, set, cfg, &val);
  CHECK(a.params() == b.params());
  CHECK(ha.to_csv() == hb.to_csv());
  REQUIRE(ha.epochs.size() == 4);
  CHECK(ha.epochs[0].val_loss == doctest::Approx(evaluate_loss(build_network<float>(NetworkSpec::for_variant(Variant::S1, 16), 6), val)));
  CHECK(ha.epochs.back().val_loss == doctest::Approx(evaluate_loss(a, val)).epsilon(1e-6));
  CHECK(ha.to_csv().rfind("epoch,train_loss,val_loss\n", 0) == 0);

  auto c = build_network<float>(NetworkSpec::for_variant(Variant::S1, 16), 6, false);
  const auto before = c.params();
  TrainConfig zero = cfg;
  zero.learning_rate = 0.0;
  train(c, set, zero);
  CHECK(c.params() == before);

  auto d = build_network<float>(NetworkSpec::for_variant(Variant::S1, 16), 6);
  CHECK_THROWS_AS(train(d, PatchSet{{InputChannel::LrPet}, {}, {}, {}}, cfg), Error);
  auto s2 = build_network<float>(NetworkSpec::for_variant(Variant::S2, 16), 6);
  CHECK_THROWS_AS(train(s2, set, cfg), Error);
  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(d, set, bad), Error);
}

TEST_CASE("checkpoint: round trip and corruption") {
  const auto dir = petsr::testing::tmp_dir("ckpt");
  auto net = build_network<float>(NetworkSpec::for_variant(Variant::S4, 8), 12, false);
  save_checkpoint(dir / "s4", net, 12, 7);
  const Checkpoint ck = load_checkpoint(dir / "s4.json");
  CHECK(ck.net.spec() == net.spec());
  CHECK(ck.net.params() == net.params());
  CHECK(ck.seed == 12);
  CHECK(ck.epoch == 7);
  CHECK(load_checkpoint(dir / "s4").net.params() == net.params());
  CHECK(std::filesystem::file_size(dir / "s4.bin") == net.parameter_count() * 4);

  const Json m = read_json_file(dir / "s4.json");
  CHECK(m["format"] == "petsr-checkpoint");
  CHECK(m["dtype"] == "float32");
  CHECK(m["layers"].size() == net.layers().size());
  CHECK(m["layers"][4]["name"] == "fusion");

  std::filesystem::resize_file(dir / "s4.bin", 40);
  CHECK_THROWS_AS(load_checkpoint(dir / "s4"), Error);

  save_checkpoint(dir / "nan", net, 12, 7);
  {
    std::fstream f(dir / "nan.bin", std::ios::in | std::ios::out | std::ios::binary);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    f.seekp(16);
    f.write(reinterpret_cast<const char*>(&nan), 4);
  }
  try {
    load_checkpoint(dir / "nan");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
  { std::ofstream(dir / "bad.json") << R"({"format":"other"})"; }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), Error);
}
