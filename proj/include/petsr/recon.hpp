#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "petsr/volume.hpp"

namespace petsr {

/// 2D parallel-beam system: `n_angles` views uniformly spaced over [0, pi),
/// radial bins centered on the isocenter, and the reconstruction grid the
/// scanner reconstructs onto.
struct ScannerGeometry {
  int n_angles = 1;
  int n_radial_bins = 1;
  double bin_width_mm = 1.0;
  double fov_radius_mm = 1.0;
  std::string label;
  int image_nx = 1;
  int image_ny = 1;
  double pixel_mm = 1.0;

  void validate() const;
  double angle(int a) const;
  ImageGrid image_template() const;

  /// Geometry whose FOV just contains a `nx` x `ny` grid of `pixel_mm`
  /// pixels; the bin count is odd so a central bin sits on the isocenter.
  static ScannerGeometry for_grid(std::string label, int n_angles, double bin_width_mm, int nx,
                                  int ny, double pixel_mm);
};

/// Angle-major projection data: data[a * n_radial_bins + b].
struct Sinogram {
  ScannerGeometry geometry;
  std::vector<double> data;

  explicit Sinogram(ScannerGeometry g = {}, double fill = 0.0);
  double& at(int a, int b) { return data[static_cast<std::size_t>(a) * geometry.n_radial_bins + b]; }
  double at(int a, int b) const {
    return data[static_cast<std::size_t>(a) * geometry.n_radial_bins + b];
  }
  double total() const;
  void validate() const;
};

/// Pixel-driven projector: each pixel center is projected onto the detector
/// and its value, weighted by pixel area over bin width, is split between the
/// two neighbouring bins by linear interpolation.
Sinogram forward_project(const ImageGrid& slice, const ScannerGeometry& geom);
/// Exact adjoint of forward_project onto the geometry's reconstruction grid,
/// or onto `grid` when given.
ImageGrid back_project(const Sinogram& sino);
ImageGrid back_project(const Sinogram& sino, const ImageGrid& grid);

/// Subset variants; `angles` lists the views used.
void forward_project_angles(const ImageGrid& slice, const ScannerGeometry& geom,
                            std::span<const int> angles, Sinogram& out);
void back_project_angles(const Sinogram& sino, std::span<const int> angles, ImageGrid& out);

struct PoissonSample {
  Sinogram counts;
  /// counts ~ Poisson(scale * input)
  double scale = 1.0;
};

PoissonSample poisson_sample(const Sinogram& sino, double total_counts, std::uint64_t seed);

/// Sum over bins of y log(Hx) - Hx (bins with y = 0 contribute -Hx).
double poisson_log_likelihood(const Sinogram& measured, const Sinogram& expected);

std::vector<std::vector<int>> interleaved_subsets(int n_angles, int n_subsets);

using OsemObserver = std::function<void(int iteration, const ImageGrid& estimate)>;

/// Ordered-subsets EM; n_subsets = 1 is MLEM. The default initial image is
/// uniform with the measured total count. The observer sees the estimate
/// after each full iteration.
ImageGrid osem_reconstruct(const Sinogram& sino, int n_iterations, int n_subsets,
                           const std::optional<ImageGrid>& init = std::nullopt,
                           const OsemObserver& observer = {});

void write_sinogram(const Sinogram& sino, const std::filesystem::path& path);
Sinogram read_sinogram(const std::filesystem::path& path);

}  // namespace petsr
