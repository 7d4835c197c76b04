#pragma once

// Straightforward single-threaded versions of the hot kernels. They share no
// code with the optimized paths and serve as test oracles and benchmark
// baselines.

#include "petsr/nn/conv.hpp"
#include "petsr/psf.hpp"
#include "petsr/recon.hpp"
#include "petsr/volume.hpp"

namespace petsr::reference {

/// Direct 7-loop convolution, zero padding 1.
template <class T>
nn::Tensor<T> conv2d_forward(const nn::Tensor<T>& input, const nn::ConvView<T>& layer);

/// Scatter-order projector: pixels outer, angles inner.
Sinogram forward_project(const ImageGrid& slice, const ScannerGeometry& geom);
/// Bin-driven smearing of every sinogram entry onto the pixels.
ImageGrid back_project(const Sinogram& sino, const ImageGrid& grid);

/// Full 3D gather with unmerged edge-clamped taps.
ImageGrid spatially_variant_blur(const ImageGrid& image, const PsfModel& model);

/// Non-separable 3D Gaussian with edge clamping.
ImageGrid gaussian_filter_sigma(const ImageGrid& grid, Vec3 sigma_voxels);

}  // namespace petsr::reference
