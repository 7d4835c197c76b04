// Optimized kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "petsr/nn/conv.hpp"
#include "petsr/psf.hpp"
#include "petsr/recon.hpp"
#include "petsr/reference/serial.hpp"

using namespace petsr;

namespace {

nn::Tensor<float> random_tensor(int n, int c, int h, int w, unsigned seed) {
  nn::Tensor<float> t(n, c, h, w);
  std::mt19937 rng(seed);
  std::normal_distribution<float> d;
  for (float& v : t.data) v = d(rng);
  return t;
}

nn::ConvLayer<float> random_layer(int in, int out, unsigned seed) {
  nn::ConvLayer<float> l(in, out);
  std::mt19937 rng(seed);
  std::normal_distribution<float> d(0.f, 0.05f);
  for (float& v : l.weights) v = d(rng);
  for (float& v : l.bias) v = d(rng);
  return l;
}

ImageGrid random_image(Dims d, Vec3 v, unsigned seed) {
  ImageGrid g(d, v, Modality::PET);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& x : g.data) x = u(rng);
  return g;
}

void BM_ConvForward(benchmark::State& st) {
  const auto x = random_tensor(4, 64, 64, 64, 1);
  const auto layer = random_layer(64, 64, 2);
  for (auto _ : st) benchmark::DoNotOptimize(nn::conv2d_forward(x, layer.view()));
  st.SetItemsProcessed(st.iterations() * 4 * 64 * 64);
}

void BM_ConvForwardSerial(benchmark::State& st) {
  const auto x = random_tensor(4, 64, 64, 64, 1);
  const auto layer = random_layer(64, 64, 2);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv2d_forward(x, layer.view()));
  st.SetItemsProcessed(st.iterations() * 4 * 64 * 64);
}

void BM_ConvBackward(benchmark::State& st) {
  const auto x = random_tensor(4, 64, 64, 64, 1);
  const auto g = random_tensor(4, 64, 64, 64, 3);
  const auto layer = random_layer(64, 64, 2);
  for (auto _ : st) benchmark::DoNotOptimize(nn::conv2d_backward(x, layer.view(), g));
}

const ScannerGeometry kGeom = ScannerGeometry::for_grid("bench", 128, 1.5, 64, 64, 2.0);

void BM_ForwardProject(benchmark::State& st) {
  const auto img = random_image({64, 64, 1}, {2, 2, 2}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(forward_project(img, kGeom));
}

void BM_ForwardProjectSerial(benchmark::State& st) {
  const auto img = random_image({64, 64, 1}, {2, 2, 2}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(reference::forward_project(img, kGeom));
}

void BM_BackProject(benchmark::State& st) {
  const auto img = random_image({64, 64, 1}, {2, 2, 2}, 4);
  const auto sino = forward_project(img, kGeom);
  for (auto _ : st) benchmark::DoNotOptimize(back_project(sino, img));
}

void BM_BackProjectSerial(benchmark::State& st) {
  const auto img = random_image({64, 64, 1}, {2, 2, 2}, 4);
  const auto sino = forward_project(img, kGeom);
  for (auto _ : st) benchmark::DoNotOptimize(reference::back_project(sino, img));
}

const PsfModel kPsf = make_hrplus_like_model(4.3, 8.3, 64.0, 16.0);

void BM_VariantBlur(benchmark::State& st) {
  const auto img = random_image({64, 64, 8}, {2, 2, 2}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(apply_spatially_variant_blur(img, kPsf));
}

void BM_VariantBlurSerial(benchmark::State& st) {
  const auto img = random_image({64, 64, 8}, {2, 2, 2}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(reference::spatially_variant_blur(img, kPsf));
}

void BM_GaussianFilter(benchmark::State& st) {
  const auto img = random_image({64, 64, 8}, {2, 2, 2}, 6);
  for (auto _ : st) benchmark::DoNotOptimize(gaussian_filter_sigma(img, {1.5, 1.5, 1.5}));
}

void BM_GaussianFilterSerial(benchmark::State& st) {
  const auto img = random_image({64, 64, 8}, {2, 2, 2}, 6);
  for (auto _ : st)
    benchmark::DoNotOptimize(reference::gaussian_filter_sigma(img, {1.5, 1.5, 1.5}));
}

}  // namespace

BENCHMARK(BM_ConvForward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardProject)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardProjectSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackProject)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackProjectSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VariantBlur)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VariantBlurSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GaussianFilter)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GaussianFilterSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
