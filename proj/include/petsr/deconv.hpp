#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "petsr/psf.hpp"
#include "petsr/volume.hpp"

namespace petsr {

/// Sum of absolute forward differences along every axis longer than one
/// voxel; the difference past the last voxel is omitted.
double tv_penalty(const ImageGrid& x);
/// Same with |t| replaced by sqrt(t^2 + eps^2).
double tv_penalty_smoothed(const ImageGrid& x, double eps);
ImageGrid tv_gradient(const ImageGrid& x, double eps);

/// Parzen-windowed joint histogram settings. Bin centers are
/// lo + i * delta for i in [0, n_bins), so delta = (hi - lo) / (n_bins - 1).
/// The Parzen sigmas are in bin-width units.
struct JeConfig {
  int n_bins = 64;
  double parzen_sigma_u = 1.0;
  double parzen_sigma_v = 1.0;
  double u_min = 0.0;
  double u_max = 1.0;
  double v_min = 0.0;
  double v_max = 1.0;

  double delta_u() const { return (u_max - u_min) / (n_bins - 1); }
  double delta_v() const { return (v_max - v_min) / (n_bins - 1); }
  void validate() const;

  /// Ranges [0, max] of each image.
  static JeConfig for_images(const ImageGrid& x, const ImageGrid& y, int n_bins = 64);
};

/// Joint density p(u_i, v_j) (integrates to one against delta_u delta_v),
/// row-major [i * n_bins + j].
std::vector<double> joint_density(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg);

/// -sum_ij du dv p log p over the Parzen joint density of (x, y); y is fixed.
double je_penalty(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg);
ImageGrid je_gradient(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg);

enum class Penalty { TV, JE };
std::string_view to_string(Penalty p);
Penalty penalty_from_string(std::string_view s);

struct DeconvConfig {
  Penalty penalty = Penalty::TV;
  double beta = 0.0;
  int max_iters = 100;
  /// <= 0 selects 1e-6 of the LR dynamic range.
  double tv_epsilon = 0.0;
  double initial_step = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  double rel_tolerance = 1e-7;
  /// Derived from the LR/MR images when absent (PET range padded by 1.5x).
  std::optional<JeConfig> je;
};

enum class DeconvStatus { MaxIterations, Converged, StepUnderflow };
std::string_view to_string(DeconvStatus s);

struct DeconvResult {
  ImageGrid image;
  /// objective[0] is the initial value, then one entry per accepted step
  std::vector<double> objective;
  int iterations = 0;
  DeconvStatus status = DeconvStatus::MaxIterations;
};

/// Minimizes 0.5 ||B x - lr||^2 + beta Phi(x) over x >= 0 by projected
/// gradient descent with Armijo backtracking, B being the spatially-variant
/// blur of `model`.
DeconvResult penalized_deconvolve(const ImageGrid& lr, const PsfModel& model,
                                  const std::optional<ImageGrid>& mr, const DeconvConfig& cfg,
                                  const std::optional<ImageGrid>& init = std::nullopt);

}  // namespace petsr
