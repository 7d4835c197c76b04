#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "petsr/json_io.hpp"
#include "petsr/phantom.hpp"
#include "petsr/psf.hpp"
#include "petsr/recon.hpp"
#include "petsr/volume.hpp"

namespace petsr::pipeline {

/// One simulated scanner: projection sampling, the reconstruction pixel
/// size, the count level per slice and the OSEM schedule.
struct ScannerSpec {
  std::string label;
  int n_angles = 64;
  double bin_width_mm = 4.0;
  double pixel_mm = 4.0;
  double counts_per_slice = 3e5;
  int osem_iterations = 6;
  int osem_subsets = 16;

  void validate() const;
};

struct PsfSpec {
  double inner_fwhm_mm = 4.3;
  double outer_fwhm_mm = 8.3;
  /// <= 0: half-diagonal of the phantom slice
  double fov_radius_mm = 0.0;
  /// <= 0: axial extent of the phantom
  double axial_extent_mm = 0.0;
  int n_radial = 6;
  int n_axial = 3;
};

struct TrainSpec {
  int epochs = 400;
  int batch_size = 10;
  double learning_rate = 3e-4;
  int filters = 64;
  bool shuffle = true;
};

struct DeconvSpec {
  int max_iters = 100;
  /// Candidate penalty weights; the first validation subject picks one.
  std::vector<double> tv_betas{3e-5, 1e-4, 3e-4, 1e-3};
  std::vector<double> je_betas{1e-1, 3e-1, 1.0, 3.0, 10.0};
};

struct StudyConfig {
  int study = 1;
  int n_subjects = 20;
  int n_train = 15;
  std::uint64_t seed = 1;

  Dims hr_dims{64, 64, 8};
  Vec3 hr_voxel_mm{2.0, 2.0, 2.0};
  double variability = 1.0;
  TissueTable tissues = default_tissue_table();

  ScannerSpec lr_scanner{"hrplus_like", 64, 4.0, 4.0, 3e5, 6, 16};
  ScannerSpec hr_scanner{"hrrt_like", 128, 1.5, 2.0, 1e6, 6, 16};
  PsfSpec psf;
  double post_filter_fwhm_mm = 2.4;

  int patch_size = 64;
  int patch_stride = 32;
  std::vector<std::string> methods{"LR", "TV", "JE", "S1", "S2", "S3", "S4",
                                   "V1", "V2", "V3", "V4"};
  TrainSpec train;
  DeconvSpec deconv;
  std::filesystem::path output_dir = "petsr_out";

  void validate() const;
  int n_val() const { return n_subjects - n_train; }
  PsfModel psf_model() const;
  /// Reference names the study evaluates against.
  std::vector<std::string> references() const;

  Json to_json() const;
  static StudyConfig from_json(const Json& j);
  static StudyConfig load(const std::filesystem::path& path);
  /// FNV-1a of the canonical JSON, output directory excluded.
  std::string hash() const;
};

/// Stream-specific seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b);

/// Everything produced while simulating one subject.
struct SubjectArtifacts {
  LabelGrid labels;
  ImageGrid true_pet;
  ImageGrid mr;
  /// LR-like reconstruction on the scanner's own grid (Studies 1 and 2)
  std::optional<ImageGrid> lr_recon;
  /// HR-like reconstruction, post-filtered (Studies 2 and 3)
  std::optional<ImageGrid> hr_recon;
};

/// Network input, training target and MR on the HR grid. `true_pet` is kept
/// for evaluation only; training code never reads it.
struct SubjectCase {
  int id = 0;
  ImageGrid lr;
  ImageGrid target;
  ImageGrid mr;
  std::optional<ImageGrid> true_pet;
};

ScannerGeometry lr_geometry(const StudyConfig& cfg);
ScannerGeometry hr_geometry(const StudyConfig& cfg);

/// Phantom, true PET and MR of one subject.
SubjectArtifacts make_phantom_subject(const StudyConfig& cfg, int subject);

/// Per-slice projection, Poisson sampling and OSEM of `truth` (HR grid).
ImageGrid simulate_scan(const ImageGrid& truth, const ScannerGeometry& geom,
                        const ScannerSpec& scanner, std::uint64_t seed);

/// Degrades an LR-scanner reconstruction: PSF blur on its own grid, then
/// bicubic upsampling to the HR grid (negative overshoot clipped).
ImageGrid degrade_to_input(const ImageGrid& lr_recon, const PsfModel& model, Dims hr_dims,
                           Vec3 hr_voxel);

SubjectCase make_subject(const StudyConfig& cfg, int subject, SubjectArtifacts* artifacts = nullptr);

struct StudyDataset {
  std::vector<SubjectCase> train;
  std::vector<SubjectCase> val;
};

/// Seed-shuffled subject order, first n_train train.
std::vector<int> subject_order(const StudyConfig& cfg);
StudyDataset make_study_dataset(const StudyConfig& cfg);

}  // namespace petsr::pipeline
