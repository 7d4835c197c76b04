#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "petsr/error.hpp"
#include "petsr/json_io.hpp"
#include "petsr/metrics.hpp"

using namespace petsr;
using petsr::testing::random_grid;

namespace {

ImageGrid vec(std::vector<double> v) {
  ImageGrid g({static_cast<int>(v.size()), 1, 1}, {1, 1, 1});
  g.data = std::move(v);
  return g;
}

}  // namespace

TEST_CASE("metrics: rmse") {
  CHECK(rmse(vec({1, 2, 3}), vec({1, 2, 3})) == 0.0);
  CHECK(rmse(vec({1, 1}), vec({1, 0})) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  const ImageGrid a = random_grid({6, 5, 2}, {1, 1, 1}, 1), b = random_grid({6, 5, 2}, {1, 1, 1}, 2);
  ImageGrid a3 = a, b3 = b;
  for (double& v : a3.data) v *= 3.0;
  for (double& v : b3.data) v *= 3.0;
  CHECK(rmse(a3, b3) == doctest::Approx(3.0 * rmse(a, b)).epsilon(1e-14));
  CHECK_THROWS_AS(rmse(vec({1, 2}), vec({1, 2, 3})), Error);

  // triangle inequality on random triples
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ImageGrid x = random_grid({7, 7, 1}, {1, 1, 1}, 3 * s + 10);
    const ImageGrid y = random_grid({7, 7, 1}, {1, 1, 1}, 3 * s + 11);
    const ImageGrid z = random_grid({7, 7, 1}, {1, 1, 1}, 3 * s + 12);
    CHECK(rmse(x, z) <= rmse(x, y) + rmse(y, z) + 1e-15);
  }

  const Mask mask = std::vector<std::uint8_t>{1, 0};
  CHECK(rmse(vec({1, 5}), vec({0, 0}), mask) == 1.0);
}

TEST_CASE("metrics: psnr") {
  CHECK(psnr(vec({0.5, 0.5}), vec({0, 1})) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(psnr(vec({1, 1}), vec({1, 0})) == doctest::Approx(3.0103).epsilon(1e-5));
  CHECK(psnr(vec({1, 2}), vec({1, 2})) == std::numeric_limits<double>::infinity());
  CHECK(format_metric(std::numeric_limits<double>::infinity()) == "inf");
  // conventional peak uses the reference max
  CHECK(psnr(vec({0.5, 0.5}), vec({0, 1}), PsnrPeak::Reference) ==
        doctest::Approx(20 * std::log10(2.0)).epsilon(1e-14));

  const ImageGrid ref = random_grid({16, 16, 1}, {1, 1, 1}, 5, 1.0, 2.0);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> noise(ref.size());
  for (double& v : noise) v = n(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    // max(est) is held fixed so only the error term moves
    ImageGrid est = ref;
    for (std::size_t i = 0; i < est.size(); ++i) est.data[i] += amp * noise[i];
    const double p = 20 * std::log10(4.0 / rmse(est, ref));
    CHECK(p < prev);
    prev = p;
    CHECK(psnr(est, ref) < psnr(ref, ref));
  }
  double prev2 = std::numeric_limits<double>::infinity();
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    ImageGrid est = ref;
    for (std::size_t i = 0; i < est.size(); ++i) est.data[i] += amp * noise[i];
    const double p = psnr(est, ref);
    CHECK(p < prev2);
    prev2 = p;
  }
}

TEST_CASE("metrics: ssim") {
  const ImageGrid x = random_grid({9, 9, 1}, {1, 1, 1}, 3);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-14));
  ImageGrid c(Dims{4, 4, 1}, {1, 1, 1}, Modality::GENERIC, 0.7);
  CHECK(ssim(c, c) == 1.0);

  // [1,0] vs [0,1], L = 1: mu = 0.5 each, population variances 0.25,
  // covariance -0.25
  const double c1 = 1e-4, c2 = 9e-4;
  const double expect = (2 * 0.25 + c1) * (2 * -0.25 + c2) / ((0.5 + c1) * (0.5 + c2));
  const double s = ssim(vec({1, 0}), vec({0, 1}));
  CHECK(s == doctest::Approx(expect).epsilon(1e-14));
  CHECK(std::abs(s - (-0.99638)) < 5e-5);

  const ImageGrid y = random_grid({9, 9, 1}, {1, 1, 1}, 4);
  CHECK(ssim(x, y, 1.0) == doctest::Approx(ssim(y, x, 1.0)).epsilon(1e-15));
  for (std::uint64_t k = 0; k < 10; ++k) {
    const ImageGrid a = random_grid({5, 5, 1}, {1, 1, 1}, 100 + k, -1, 1);
    const ImageGrid b = random_grid({5, 5, 1}, {1, 1, 1}, 200 + k, -1, 1);
    const double v = ssim(a, b, 1.0);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(ssim(vec({1, 2}), vec({1})), Error);
}

TEST_CASE("metrics: report") {
  MetricsReport r;
  r.study = "study1";
  r.seed = 3;
  r.config_hash = "abc";
  r.rows.push_back({"LR", "true", 17.5, 0.8});
  r.rows.push_back({"S1", "true", std::numeric_limits<double>::infinity(), 1.0});
  r.notes.push_back({"beta_TV", "0.01"});
  r.validate();
  CHECK(r.find("S1", "true") != nullptr);
  CHECK(r.find("S1", "target") == nullptr);

  const Json j = Json::parse(r.to_json());
  CHECK(j["study"] == "study1");
  CHECK(j["rows"].size() == 2);
  const std::string csv = r.to_csv();
  CHECK(csv.find("LR,true,17.500000,0.800000") != std::string::npos);
  CHECK(csv.find("inf") != std::string::npos);
  CHECK(r.to_table().find("S1") != std::string::npos);

  const auto dir = petsr::testing::tmp_dir("report");
  r.write(dir);
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::exists(dir / "report.json"));

  MetricsReport bad = r;
  bad.rows.push_back({"X", "true", 1.0, 1.5});
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = r;
  bad.rows.push_back({"LR", "true", 1.0, 0.5});
  CHECK_THROWS_AS(bad.validate(), Error);
}
