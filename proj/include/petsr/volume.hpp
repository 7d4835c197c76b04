#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace petsr {

struct Dims {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  bool operator==(const Dims&) const = default;
};

using Vec3 = std::array<double, 3>;

enum class Modality { PET, MR, LABEL, GENERIC };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Dense scalar field on a regular grid, x fastest. Held in 64-bit
/// precision; stored on disk as float32.
struct ImageGrid {
  Dims dims;
  Vec3 voxel_size_mm{1.0, 1.0, 1.0};
  std::vector<double> data;
  Modality modality = Modality::GENERIC;
  std::string description;

  ImageGrid() = default;
  ImageGrid(Dims d, Vec3 voxel, Modality m = Modality::GENERIC, double fill = 0.0)
      : dims(d), voxel_size_mm(voxel), data(d.count(), fill), modality(m) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int x, int y, int z = 0) const {
    return (static_cast<std::size_t>(z) * dims.ny + y) * dims.nx + x;
  }
  double& at(int x, int y, int z = 0) { return data[index(x, y, z)]; }
  double at(int x, int y, int z = 0) const { return data[index(x, y, z)]; }

  /// Copy with the same geometry and metadata but new contents.
  ImageGrid like(double fill = 0.0) const {
    ImageGrid g(dims, voxel_size_mm, modality, fill);
    g.description = description;
    return g;
  }

  bool same_geometry(const ImageGrid& other) const;

  /// Throws when any ImageGrid invariant is violated.
  void validate() const;
};

/// A single z-slice as a 2D grid.
ImageGrid extract_slice(const ImageGrid& grid, int z);
void insert_slice(ImageGrid& grid, const ImageGrid& slice, int z);

/// Reads `<base>.raw` + `<base>.json`; `path` may name either file or the base.
ImageGrid read_volume(const std::filesystem::path& path);
void write_volume(const ImageGrid& grid, const std::filesystem::path& path);

/// Base path without a `.raw`/`.json` extension.
std::filesystem::path volume_base(const std::filesystem::path& path);

/// Catmull-Rom (a = -0.5) cubic convolution weight.
double cubic_kernel(double t);

/// Separable bicubic resampling onto a grid sharing the source's center.
/// Samples outside the source extent are edge-clamped.
ImageGrid resample_bicubic(const ImageGrid& grid, Dims target_dims, Vec3 target_voxel_mm);

double fwhm_to_sigma_mm(double fwhm_mm);

/// Unit-sum Gaussian taps covering [-ceil(4 sigma), ceil(4 sigma)].
std::vector<double> gaussian_taps(double sigma_voxels);

/// Separable Gaussian filter, edge-clamped, kernels truncated at 4 sigma and
/// renormalized.
ImageGrid gaussian_filter(const ImageGrid& grid, double fwhm_mm);
ImageGrid gaussian_filter_sigma(const ImageGrid& grid, Vec3 sigma_voxels);

enum class SliceAxis { X, Y, Z };

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;
};

/// Linear windowing of one slice to 8 bits.
Gray8 window_slice(const ImageGrid& grid, SliceAxis axis, int index,
                   std::pair<double, double> window);
void write_png(const Gray8& image, const std::filesystem::path& path);
void export_slice_png(const ImageGrid& grid, SliceAxis axis, int index,
                      std::pair<double, double> window, const std::filesystem::path& path);
/// Side-by-side panel of equally sized slices separated by a black gutter.
Gray8 hstack(const std::vector<Gray8>& tiles, int gutter = 2);

}  // namespace petsr
