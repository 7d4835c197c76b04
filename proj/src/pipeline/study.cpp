#include "petsr/pipeline/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "petsr/error.hpp"
#include "petsr/nn/network.hpp"

namespace petsr::pipeline {

void ScannerSpec::validate() const {
  require(n_angles >= 1, ErrorKind::InvalidArgument, label + ": n_angles must be >= 1");
  require(bin_width_mm > 0.0 && pixel_mm > 0.0, ErrorKind::InvalidArgument,
          label + ": bin width and pixel size must be positive");
  require(counts_per_slice > 0.0, ErrorKind::InvalidArgument, label + ": counts must be positive");
  require(osem_iterations >= 1 && osem_subsets >= 1 && osem_subsets <= n_angles,
          ErrorKind::InvalidArgument, label + ": bad OSEM schedule");
}

namespace {

bool is_network(const std::string& m) {
  return m.size() == 2 && (m[0] == 'S' || m[0] == 'V') && m[1] >= '1' && m[1] <= '4';
}

int grid_ratio(int n, double voxel, double pixel, const std::string& label) {
  const double r = n * voxel / pixel;
  const int k = static_cast<int>(std::lround(r));
  require(k >= 1 && std::abs(r - k) < 1e-9, ErrorKind::InvalidArgument,
          label + ": pixel size does not tile the phantom field of view");
  return k;
}

}  // namespace

void StudyConfig::validate() const {
  require(study >= 1 && study <= 3, ErrorKind::InvalidArgument, "study must be 1, 2 or 3");
  require(n_train >= 1 && n_train < n_subjects, ErrorKind::InvalidArgument,
          "need 1 <= n_train < n_subjects");
  require(hr_dims.nx >= 32 && hr_dims.ny >= 32 && hr_dims.nz >= 1, ErrorKind::InvalidArgument,
          "phantom slices must be at least 32x32");
  for (double v : hr_voxel_mm)
    require(v > 0.0, ErrorKind::InvalidArgument, "voxel size must be positive");
  require(variability >= 0.0 && variability <= 1.0, ErrorKind::InvalidArgument,
          "variability must lie in [0, 1]");
  tissues.validate();
  lr_scanner.validate();
  hr_scanner.validate();
  grid_ratio(hr_dims.nx, hr_voxel_mm[0], lr_scanner.pixel_mm, lr_scanner.label);
  grid_ratio(hr_dims.ny, hr_voxel_mm[1], lr_scanner.pixel_mm, lr_scanner.label);
  require(std::abs(hr_scanner.pixel_mm - hr_voxel_mm[0]) < 1e-12 &&
              std::abs(hr_voxel_mm[0] - hr_voxel_mm[1]) < 1e-12,
          ErrorKind::InvalidArgument, "HR scanner must reconstruct on the phantom grid");
  require(psf.inner_fwhm_mm >= 0.0 && psf.outer_fwhm_mm >= 0.0 && psf.n_radial >= 1 &&
              psf.n_axial >= 1,
          ErrorKind::InvalidArgument, "bad PSF parameters");
  require(post_filter_fwhm_mm >= 0.0, ErrorKind::InvalidArgument, "post filter must be >= 0");
  require(patch_size >= 1 && patch_stride >= 1, ErrorKind::InvalidArgument,
          "patch size and stride must be >= 1");
  require(patch_size <= hr_dims.nx && patch_size <= hr_dims.ny, ErrorKind::InvalidArgument,
          "patch size exceeds the image");
  require(!methods.empty(), ErrorKind::InvalidArgument, "no methods requested");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    require(m == "LR" || m == "TV" || m == "JE" || is_network(m), ErrorKind::InvalidArgument,
            "unknown method '" + m + "'");
    require(seen.insert(m).second, ErrorKind::InvalidArgument, "duplicate method '" + m + "'");
    if (m[0] == 'V')
      require(patch_size >= 41, ErrorKind::InvalidArgument,
              "depth-20 variants need patch_size >= 41");
  }
  require(train.epochs >= 0 && train.batch_size >= 1 && train.learning_rate >= 0.0 &&
              train.filters >= 1,
          ErrorKind::InvalidArgument, "bad training parameters");
  require(deconv.max_iters >= 0 && !deconv.tv_betas.empty() && !deconv.je_betas.empty(),
          ErrorKind::InvalidArgument, "bad deconvolution parameters");
}

PsfModel StudyConfig::psf_model() const {
  const double fov = psf.fov_radius_mm > 0.0
                         ? psf.fov_radius_mm
                         : std::hypot(0.5 * hr_dims.nx * hr_voxel_mm[0],
                                      0.5 * hr_dims.ny * hr_voxel_mm[1]);
  const double axial =
      psf.axial_extent_mm > 0.0 ? psf.axial_extent_mm : hr_dims.nz * hr_voxel_mm[2];
  return make_hrplus_like_model(psf.inner_fwhm_mm, psf.outer_fwhm_mm, fov, axial, psf.n_radial,
                                psf.n_axial);
}

std::vector<std::string> StudyConfig::references() const {
  switch (study) {
    case 1: return {"true"};
    case 2: return {"target", "true"};
    default: return {"target"};
  }
}

namespace {

Json scanner_json(const ScannerSpec& s) {
  return {{"label", s.label},
          {"n_angles", s.n_angles},
          {"bin_width_mm", s.bin_width_mm},
          {"pixel_mm", s.pixel_mm},
          {"counts_per_slice", s.counts_per_slice},
          {"osem_iterations", s.osem_iterations},
          {"osem_subsets", s.osem_subsets}};
}

ScannerSpec scanner_from(const Json& j, ScannerSpec s) {
  s.label = j.value("label", s.label);
  s.n_angles = j.value("n_angles", s.n_angles);
  s.bin_width_mm = j.value("bin_width_mm", s.bin_width_mm);
  s.pixel_mm = j.value("pixel_mm", s.pixel_mm);
  s.counts_per_slice = j.value("counts_per_slice", s.counts_per_slice);
  s.osem_iterations = j.value("osem_iterations", s.osem_iterations);
  s.osem_subsets = j.value("osem_subsets", s.osem_subsets);
  return s;
}

}  // namespace

Json StudyConfig::to_json() const {
  Json j;
  j["study"] = study;
  j["n_subjects"] = n_subjects;
  j["n_train"] = n_train;
  j["seed"] = seed;
  j["phantom"] = {{"dims", {hr_dims.nx, hr_dims.ny, hr_dims.nz}},
                  {"voxel_mm", hr_voxel_mm},
                  {"variability", variability},
                  {"tissues", tissue_table_to_json(tissues)}};
  j["lr_scanner"] = scanner_json(lr_scanner);
  j["hr_scanner"] = scanner_json(hr_scanner);
  j["psf"] = {{"inner_fwhm_mm", psf.inner_fwhm_mm},   {"outer_fwhm_mm", psf.outer_fwhm_mm},
              {"fov_radius_mm", psf.fov_radius_mm},   {"axial_extent_mm", psf.axial_extent_mm},
              {"n_radial", psf.n_radial},             {"n_axial", psf.n_axial}};
  j["post_filter_fwhm_mm"] = post_filter_fwhm_mm;
  j["patch_size"] = patch_size;
  j["patch_stride"] = patch_stride;
  j["methods"] = methods;
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"filters", train.filters},
                {"shuffle", train.shuffle}};
  j["deconv"] = {{"max_iters", deconv.max_iters},
                 {"tv_betas", deconv.tv_betas},
                 {"je_betas", deconv.je_betas}};
  j["output_dir"] = output_dir.string();
  return j;
}

StudyConfig StudyConfig::from_json(const Json& j) {
  static const std::set<std::string> known{
      "study",      "n_subjects",  "n_train",    "seed",         "phantom",
      "lr_scanner", "hr_scanner",  "psf",        "post_filter_fwhm_mm", "patch_size",
      "patch_stride", "methods",   "train",      "deconv",       "output_dir"};
  require(j.is_object(), ErrorKind::Format, "study config must be a JSON object");
  for (const auto& [k, v] : j.items())
    require(known.count(k) > 0, ErrorKind::Format, "unknown study config key '" + k + "'");
  StudyConfig c;
  try {
    c.study = j.value("study", c.study);
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.n_train = j.value("n_train", c.n_train);
    c.seed = j.value("seed", c.seed);
    if (j.contains("phantom")) {
      const Json& p = j["phantom"];
      if (p.contains("dims")) {
        const auto d = p["dims"].get<std::vector<int>>();
        require(d.size() == 3, ErrorKind::Format, "phantom.dims needs three entries");
        c.hr_dims = {d[0], d[1], d[2]};
      }
      if (p.contains("voxel_mm")) c.hr_voxel_mm = p["voxel_mm"].get<Vec3>();
      c.variability = p.value("variability", c.variability);
      if (p.contains("tissues")) c.tissues = tissue_table_from_json(p["tissues"]);
    }
    if (j.contains("lr_scanner")) c.lr_scanner = scanner_from(j["lr_scanner"], c.lr_scanner);
    if (j.contains("hr_scanner")) c.hr_scanner = scanner_from(j["hr_scanner"], c.hr_scanner);
    if (j.contains("psf")) {
      const Json& p = j["psf"];
      c.psf.inner_fwhm_mm = p.value("inner_fwhm_mm", c.psf.inner_fwhm_mm);
      c.psf.outer_fwhm_mm = p.value("outer_fwhm_mm", c.psf.outer_fwhm_mm);
      c.psf.fov_radius_mm = p.value("fov_radius_mm", c.psf.fov_radius_mm);
      c.psf.axial_extent_mm = p.value("axial_extent_mm", c.psf.axial_extent_mm);
      c.psf.n_radial = p.value("n_radial", c.psf.n_radial);
      c.psf.n_axial = p.value("n_axial", c.psf.n_axial);
    }
    c.post_filter_fwhm_mm = j.value("post_filter_fwhm_mm", c.post_filter_fwhm_mm);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.patch_stride = j.value("patch_stride", c.patch_stride);
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("train")) {
      const Json& t = j["train"];
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.filters = t.value("filters", c.train.filters);
      c.train.shuffle = t.value("shuffle", c.train.shuffle);
    }
    if (j.contains("deconv")) {
      const Json& d = j["deconv"];
      c.deconv.max_iters = d.value("max_iters", c.deconv.max_iters);
      if (d.contains("tv_betas")) c.deconv.tv_betas = d["tv_betas"].get<std::vector<double>>();
      if (d.contains("je_betas")) c.deconv.je_betas = d["je_betas"].get<std::vector<double>>();
    }
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, std::string("bad study config: ") + e.what());
  }
  c.validate();
  return c;
}

StudyConfig StudyConfig::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

std::string StudyConfig::hash() const {
  Json j = to_json();
  j.erase("output_dir");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ a) ^ (b * 0x632be59bd9b4e019ull));
}

// ---------------------------------------------------------------------------

namespace {

enum Stream : std::uint64_t {
  kPhantom = 1,
  kMrNoise = 2,
  kLrScan = 3,
  kHrScan = 4,
  kSplit = 5,
};

}  // namespace

ScannerGeometry lr_geometry(const StudyConfig& cfg) {
  const auto& s = cfg.lr_scanner;
  const int nx = grid_ratio(cfg.hr_dims.nx, cfg.hr_voxel_mm[0], s.pixel_mm, s.label);
  const int ny = grid_ratio(cfg.hr_dims.ny, cfg.hr_voxel_mm[1], s.pixel_mm, s.label);
  auto g = ScannerGeometry::for_grid(s.label, s.n_angles, s.bin_width_mm, nx, ny, s.pixel_mm);
  // The HR-grid truth is projected with this geometry, so the FOV must hold it.
  g.fov_radius_mm = std::max(g.fov_radius_mm,
                             std::hypot(0.5 * (cfg.hr_dims.nx - 1) * cfg.hr_voxel_mm[0],
                                        0.5 * (cfg.hr_dims.ny - 1) * cfg.hr_voxel_mm[1]));
  int bins = static_cast<int>(std::ceil(2.0 * g.fov_radius_mm / g.bin_width_mm)) + 1;
  if (bins % 2 == 0) ++bins;
  g.n_radial_bins = std::max(g.n_radial_bins, bins);
  g.validate();
  return g;
}

ScannerGeometry hr_geometry(const StudyConfig& cfg) {
  const auto& s = cfg.hr_scanner;
  return ScannerGeometry::for_grid(s.label, s.n_angles, s.bin_width_mm, cfg.hr_dims.nx,
                                   cfg.hr_dims.ny, s.pixel_mm);
}

SubjectArtifacts make_phantom_subject(const StudyConfig& cfg, int subject) {
  SubjectArtifacts a;
  a.labels = generate_phantom(derive_seed(cfg.seed, subject, kPhantom), cfg.hr_dims,
                              cfg.hr_voxel_mm, cfg.variability);
  a.true_pet = labels_to_activity(a.labels, cfg.tissues);
  a.mr = labels_to_mr(a.labels, cfg.tissues, derive_seed(cfg.seed, subject, kMrNoise));
  return a;
}

ImageGrid simulate_scan(const ImageGrid& truth, const ScannerGeometry& geom,
                        const ScannerSpec& scanner, std::uint64_t seed) {
  truth.validate();
  ImageGrid grid = geom.image_template();
  ImageGrid out({geom.image_nx, geom.image_ny, truth.dims.nz},
                {geom.pixel_mm, geom.pixel_mm, truth.voxel_size_mm[2]}, Modality::PET);
  for (int z = 0; z < truth.dims.nz; ++z) {
    const ImageGrid slice = extract_slice(truth, z);
    ImageGrid recon = grid.like();
    const Sinogram clean = forward_project(slice, geom);
    if (clean.total() > 0.0) {
      const PoissonSample noisy = poisson_sample(clean, scanner.counts_per_slice,
                                                 derive_seed(seed, static_cast<std::uint64_t>(z), 0));
      if (noisy.counts.total() > 0.0) {
        recon = osem_reconstruct(noisy.counts, scanner.osem_iterations, scanner.osem_subsets);
        // Back to activity units.
        for (double& v : recon.data) v /= noisy.scale;
      }
    }
    recon.voxel_size_mm[2] = truth.voxel_size_mm[2];
    recon.modality = Modality::PET;
    insert_slice(out, recon, z);
  }
  out.description = geom.label + " OSEM";
  return out;
}

ImageGrid degrade_to_input(const ImageGrid& lr_recon, const PsfModel& model, Dims hr_dims,
                           Vec3 hr_voxel) {
  ImageGrid blurred = apply_spatially_variant_blur(lr_recon, model);
  ImageGrid up = resample_bicubic(blurred, hr_dims, hr_voxel);
  for (double& v : up.data) v = std::max(v, 0.0);
  up.modality = Modality::PET;
  up.description = "LR input";
  return up;
}

SubjectCase make_subject(const StudyConfig& cfg, int subject, SubjectArtifacts* artifacts) {
  cfg.validate();
  SubjectArtifacts a = make_phantom_subject(cfg, subject);
  const PsfModel model = cfg.psf_model();
  SubjectCase c;
  c.id = subject;
  c.mr = a.mr;

  auto hr_target = [&] {
    ImageGrid hr = simulate_scan(a.true_pet, hr_geometry(cfg), cfg.hr_scanner,
                                 derive_seed(cfg.seed, subject, kHrScan));
    if (cfg.post_filter_fwhm_mm > 0.0) hr = gaussian_filter(hr, cfg.post_filter_fwhm_mm);
    hr.modality = Modality::PET;
    hr.description = "HR target";
    return hr;
  };

  if (cfg.study == 1 || cfg.study == 2) {
    a.lr_recon = simulate_scan(a.true_pet, lr_geometry(cfg), cfg.lr_scanner,
                               derive_seed(cfg.seed, subject, kLrScan));
    c.lr = degrade_to_input(*a.lr_recon, model, cfg.hr_dims, cfg.hr_voxel_mm);
  }
  if (cfg.study == 1) {
    c.target = a.true_pet;
    c.true_pet = a.true_pet;
  } else if (cfg.study == 2) {
    a.hr_recon = hr_target();
    c.target = *a.hr_recon;
    c.true_pet = a.true_pet;
  } else {
    a.hr_recon = hr_target();
    c.target = *a.hr_recon;
    c.lr = apply_spatially_variant_blur(c.target, model);
    c.lr.description = "LR input";
  }
  if (artifacts) *artifacts = std::move(a);
  return c;
}

std::vector<int> subject_order(const StudyConfig& cfg) {
  std::vector<int> ids(cfg.n_subjects);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0, kSplit));
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

StudyDataset make_study_dataset(const StudyConfig& cfg) {
  cfg.validate();
  const auto ids = subject_order(cfg);
  StudyDataset ds;
  for (int k = 0; k < cfg.n_subjects; ++k) {
    SubjectCase c = make_subject(cfg, ids[k]);
    (k < cfg.n_train ? ds.train : ds.val).push_back(std::move(c));
  }
  return ds;
}

}  // namespace petsr::pipeline
