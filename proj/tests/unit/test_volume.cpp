#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "petsr/error.hpp"
#include "petsr/json_io.hpp"
#include "petsr/reference/serial.hpp"
#include "petsr/volume.hpp"

using namespace petsr;
using petsr::testing::max_abs_diff;
using petsr::testing::random_grid;
using petsr::testing::tmp_dir;

TEST_CASE("volume: grid invariants") {
  ImageGrid g({3, 2, 2}, {1, 1, 1}, Modality::PET);
  CHECK(g.size() == 12);
  CHECK(g.index(2, 1, 1) == 11);
  g.validate();
  g.data[3] = -1.0;
  CHECK_THROWS_AS(g.validate(), Error);
  g.data[3] = std::numeric_limits<double>::quiet_NaN();
  g.modality = Modality::GENERIC;
  CHECK_THROWS_AS(g.validate(), Error);
  ImageGrid bad({2, 2, 1}, {1, 0, 1});
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("volume: write then read is bit exact") {
  const auto dir = tmp_dir("roundtrip");
  ImageGrid g({4, 4, 1}, {1, 1, 1}, Modality::PET, 2.5);
  write_volume(g, dir / "a");
  const ImageGrid r = read_volume(dir / "a");
  CHECK(r.dims == g.dims);
  CHECK(r.data == g.data);
  CHECK(r.modality == Modality::PET);

  // float32 values survive exactly
  ImageGrid h = random_grid({5, 3, 2}, {0.5, 2, 3}, 9);
  for (double& v : h.data) v = static_cast<float>(v);
  h.description = "random";
  write_volume(h, dir / "b.raw");
  const ImageGrid hr = read_volume(dir / "b.json");
  CHECK(hr.data == h.data);
  CHECK(hr.voxel_size_mm == h.voxel_size_mm);
  CHECK(hr.description == "random");
}

TEST_CASE("volume: file format") {
  const auto dir = tmp_dir("format");
  ImageGrid g({2, 2, 1}, {1, 1, 1}, Modality::GENERIC);
  g.data = {0, 1, 2, 3};
  write_volume(g, dir / "f");
  CHECK(std::filesystem::file_size(dir / "f.raw") == 16);
  const Json side = read_json_file(dir / "f.json");
  CHECK(side["dims"] == Json::array({2, 2, 1}));
  CHECK(side["voxel_size_mm"] == Json::array({1.0, 1.0, 1.0}));
  CHECK(side["modality"] == "GENERIC");

  std::ifstream in(dir / "f.raw", std::ios::binary);
  unsigned char bytes[16];
  in.read(reinterpret_cast<char*>(bytes), 16);
  // 1.0f little-endian = 00 00 80 3f
  CHECK(bytes[4] == 0x00);
  CHECK(bytes[6] == 0x80);
  CHECK(bytes[7] == 0x3f);
}

TEST_CASE("volume: read errors") {
  const auto dir = tmp_dir("errors");
  ImageGrid g({4, 4, 1}, {1, 1, 1}, Modality::GENERIC, 1.0);
  write_volume(g, dir / "short");
  std::filesystem::resize_file(dir / "short.raw", (16 - 3) * 4);
  try {
    read_volume(dir / "short");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }

  write_volume(g, dir / "nan");
  {
    std::fstream f(dir / "nan.raw", std::ios::in | std::ios::out | std::ios::binary);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    f.seekp(8);
    f.write(reinterpret_cast<const char*>(&nan), 4);
  }
  try {
    read_volume(dir / "nan");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }

  write_volume(g, dir / "nosidecar");
  std::filesystem::remove(dir / "nosidecar.json");
  try {
    read_volume(dir / "nosidecar");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }

  write_volume(g, dir / "corrupt");
  { std::ofstream(dir / "corrupt.json") << "{ not json"; }
  try {
    read_volume(dir / "corrupt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
}

TEST_CASE("volume: slices") {
  const ImageGrid g = random_grid({4, 3, 5}, {1, 2, 3}, 3);
  ImageGrid h = g.like();
  for (int z = 0; z < 5; ++z) insert_slice(h, extract_slice(g, z), z);
  CHECK(h.data == g.data);
  CHECK_THROWS_AS(extract_slice(g, 5), Error);
}

TEST_CASE("volume: cubic kernel") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == 0.0);
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(0.5) == doctest::Approx(9.0 / 16).epsilon(1e-15));
  CHECK(cubic_kernel(1.5) == doctest::Approx(-1.0 / 16).epsilon(1e-15));
}

TEST_CASE("volume: bicubic resampling") {
  const ImageGrid g = random_grid({6, 5, 3}, {2, 2, 2}, 4);
  CHECK(resample_bicubic(g, g.dims, g.voxel_size_mm).data == g.data);

  ImageGrid c({5, 5, 3}, {4, 4, 2}, Modality::PET, 3.25);
  const ImageGrid up = resample_bicubic(c, {10, 10, 6}, {2, 2, 1});
  for (double v : up.data) CHECK(v == doctest::Approx(3.25).epsilon(1e-14));

  // [0,1,0,0] at the midpoint between samples 1 and 2
  ImageGrid p({4, 1, 1}, {1, 1, 1});
  p.data = {0, 1, 0, 0};
  // 7 samples at 0.5 mm share the source center; sample 3 sits at position 1.5
  const ImageGrid r = resample_bicubic(p, {7, 1, 1}, {0.5, 1, 1});
  CHECK(r.data[3] == doctest::Approx(0.5625).epsilon(1e-14));

  // linear ramp reproduced in the interior
  ImageGrid ramp({16, 1, 1}, {1, 1, 1});
  for (int x = 0; x < 16; ++x) ramp.data[x] = 0.3 * x - 1.0;
  const ImageGrid rr = resample_bicubic(ramp, {31, 1, 1}, {16.0 / 31, 1, 1});
  for (int i = 0; i < 31; ++i) {
    const double pos = (i - 15.0) * (16.0 / 31) + 7.5;
    if (pos < 1.0 || pos >= 14.0) continue;
    CHECK(rr.data[i] == doctest::Approx(0.3 * pos - 1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(resample_bicubic(g, {2, 2, 2}, {0, 1, 1}), Error);
}

TEST_CASE("volume: gaussian filter") {
  CHECK(std::abs(fwhm_to_sigma_mm(2.4) - 1.0191862) < 1e-7);

  const auto taps = gaussian_taps(1.3);
  double s = 0.0;
  for (double t : taps) s += t;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(taps.size() == 2 * 6 + 1);

  ImageGrid c({9, 7, 5}, {1, 1, 1}, Modality::PET, 7.0);
  const ImageGrid f = gaussian_filter(c, 2.4);
  for (double v : f.data) CHECK(v == doctest::Approx(7.0).epsilon(1e-14));

  // impulse vs direct summation of a normalized 2D Gaussian
  ImageGrid imp({33, 33, 1}, {1, 1, 1});
  imp.at(16, 16) = 1.0;
  const ImageGrid fi = gaussian_filter_sigma(imp, {1.0, 1.0, 1.0});
  double norm = 0.0;
  for (int k = -4; k <= 4; ++k) norm += std::exp(-0.5 * k * k);
  CHECK(std::abs(fi.at(16, 16) - 1.0 / (norm * norm)) < 1e-6);
  CHECK(std::abs(fi.at(18, 15) - std::exp(-0.5 * 5.0) / (norm * norm)) < 1e-6);

  // mirror symmetry
  const ImageGrid g = random_grid({12, 10, 4}, {1, 1, 2}, 8);
  ImageGrid m = g.like();
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 12; ++x) m.at(11 - x, y, z) = g.at(x, y, z);
  const ImageGrid fg = gaussian_filter(g, 3.0), fm = gaussian_filter(m, 3.0);
  double worst = 0.0;
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 12; ++x) worst = std::max(worst, std::abs(fm.at(11 - x, y, z) - fg.at(x, y, z)));
  CHECK(worst < 1e-13);

  // mean preservation: a random blob on a constant background, kept more than
  // 4 sigma away from the border so clamping never touches it
  ImageGrid blob({40, 40, 1}, {1, 1, 1}, Modality::GENERIC, 2.0);
  const ImageGrid noise = random_grid({40, 40, 1}, {1, 1, 1}, 13);
  for (int y = 12; y < 28; ++y)
    for (int x = 12; x < 28; ++x) blob.at(x, y) += noise.at(x, y);
  const ImageGrid fb = gaussian_filter(blob, 2.0);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < blob.size(); ++i) {
    m0 += blob.data[i];
    m1 += fb.data[i];
  }
  CHECK(std::abs(m1 - m0) / m0 < 1e-6);
}

TEST_CASE("volume: png windowing") {
  ImageGrid g({4, 3, 2}, {1, 1, 1}, Modality::GENERIC, 0.5);
  Gray8 w = window_slice(g, SliceAxis::Z, 1, {0.0, 1.0});
  CHECK(w.width == 4);
  CHECK(w.height == 3);
  for (auto p : w.pixels) CHECK(p == 128);

  g.data.assign(g.size(), -3.0);
  for (auto p : window_slice(g, SliceAxis::Z, 0, {0.0, 1.0}).pixels) CHECK(p == 0);
  g.data.assign(g.size(), 1.25);
  for (auto p : window_slice(g, SliceAxis::Z, 0, {1.0, 2.0}).pixels) CHECK(p == 64);
  g.data.assign(g.size(), 5.0);
  for (auto p : window_slice(g, SliceAxis::Z, 0, {1.0, 2.0}).pixels) CHECK(p == 255);

  CHECK_THROWS_AS(window_slice(g, SliceAxis::Z, 2, {0.0, 1.0}), Error);
  CHECK_THROWS_AS(window_slice(g, SliceAxis::Z, 0, {1.0, 1.0}), Error);
  const Gray8 xs = window_slice(g, SliceAxis::X, 3, {0.0, 1.0});
  CHECK(xs.width == 3);
  CHECK(xs.height == 2);

  const Gray8 panel = hstack({w, w, w}, 2);
  CHECK(panel.width == 4 * 3 + 2 * 2);
  CHECK(panel.height == 3);

  const auto dir = tmp_dir("png");
  export_slice_png(g, SliceAxis::Z, 0, {0.0, 10.0}, dir / "s.png");
  std::ifstream in(dir / "s.png", std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
}

TEST_CASE("volume: separable filter equals the direct 3D oracle") {
  const ImageGrid g = random_grid({11, 9, 6}, {1, 1, 2}, 21);
  const Vec3 s{1.2, 0.7, 0.9};
  CHECK(max_abs_diff(gaussian_filter_sigma(g, s), reference::gaussian_filter_sigma(g, s)) < 1e-12);
}
