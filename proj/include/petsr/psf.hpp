#pragma once

#include <filesystem>
#include <vector>

#include "petsr/volume.hpp"

namespace petsr {

/// Spatially-variant isotropic Gaussian PSF. Widths are sampled on an
/// irregular (radial x axial) grid and bilinearly interpolated; the model is
/// radially and axially symmetric, so queries use |axial| measured from the
/// central plane.
struct PsfModel {
  std::vector<double> radial_samples_mm;
  std::vector<double> axial_samples_mm;
  /// sigma_mm[r][a]
  std::vector<std::vector<double>> sigma_mm;

  void validate() const;
  double min_sigma() const;
  double max_sigma() const;
};

double fwhm_to_sigma(double fwhm_mm);

/// HR+-like profile: FWHM grows linearly from `inner` at the center to
/// `outer` at `fov_radius`, constant along the axis. Radial samples are
/// quadratically spaced (denser near the center).
PsfModel make_hrplus_like_model(double inner_fwhm_mm = 4.3, double outer_fwhm_mm = 8.3,
                                double fov_radius_mm = 120.0, double axial_extent_mm = 40.0,
                                int n_radial = 6, int n_axial = 3);

PsfModel constant_psf_model(double sigma_mm);

double interpolate_sigma(const PsfModel& model, double radius_mm, double axial_mm);

/// Per-voxel sigma (mm) for a grid whose center is the radius origin.
ImageGrid sigma_map(const ImageGrid& grid, const PsfModel& model);

/// Gather-convention blur: every output voxel is the unit-normalized Gaussian
/// average of the (edge-clamped) input around it, with sigma evaluated at
/// the output voxel.
ImageGrid apply_spatially_variant_blur(const ImageGrid& image, const PsfModel& model);
/// Exact transpose of apply_spatially_variant_blur.
ImageGrid apply_spatially_variant_blur_adjoint(const ImageGrid& image, const PsfModel& model);

PsfModel read_psf_model(const std::filesystem::path& path);
void write_psf_model(const PsfModel& model, const std::filesystem::path& path);

}  // namespace petsr
