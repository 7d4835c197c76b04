#include "petsr/psf.hpp"

#include <algorithm>
#include <cmath>

#include "petsr/error.hpp"
#include "petsr/json_io.hpp"

namespace petsr {

void PsfModel::validate() const {
  require(!radial_samples_mm.empty() && !axial_samples_mm.empty(), ErrorKind::InvalidArgument,
          "PSF model needs at least one radial and one axial sample");
  for (std::size_t i = 1; i < radial_samples_mm.size(); ++i)
    require(radial_samples_mm[i] > radial_samples_mm[i - 1], ErrorKind::InvalidArgument,
            "radial samples must be strictly increasing");
  for (std::size_t i = 1; i < axial_samples_mm.size(); ++i)
    require(axial_samples_mm[i] > axial_samples_mm[i - 1], ErrorKind::InvalidArgument,
            "axial samples must be strictly increasing");
  require(sigma_mm.size() == radial_samples_mm.size(), ErrorKind::ShapeMismatch,
          "sigma matrix rows != radial samples");
  for (const auto& row : sigma_mm) {
    require(row.size() == axial_samples_mm.size(), ErrorKind::ShapeMismatch,
            "sigma matrix columns != axial samples");
    for (double s : row)
      require(s > 0.0 && std::isfinite(s), ErrorKind::InvalidArgument,
              "PSF sigma must be positive and finite");
  }
}

double PsfModel::min_sigma() const {
  double m = sigma_mm.at(0).at(0);
  for (const auto& row : sigma_mm) m = std::min(m, *std::min_element(row.begin(), row.end()));
  return m;
}

double PsfModel::max_sigma() const {
  double m = sigma_mm.at(0).at(0);
  for (const auto& row : sigma_mm) m = std::max(m, *std::max_element(row.begin(), row.end()));
  return m;
}

double fwhm_to_sigma(double fwhm_mm) { return fwhm_to_sigma_mm(fwhm_mm); }

PsfModel make_hrplus_like_model(double inner_fwhm_mm, double outer_fwhm_mm, double fov_radius_mm,
                                double axial_extent_mm, int n_radial, int n_axial) {
  require(inner_fwhm_mm > 0.0 && inner_fwhm_mm <= outer_fwhm_mm, ErrorKind::InvalidArgument,
          "need 0 < inner FWHM <= outer FWHM");
  require(fov_radius_mm > 0.0 && axial_extent_mm >= 0.0, ErrorKind::InvalidArgument,
          "FOV radius must be positive and axial extent non-negative");
  require(n_radial >= 1 && n_axial >= 1, ErrorKind::InvalidArgument,
          "need at least one radial and one axial sample");

  PsfModel m;
  for (int i = 0; i < n_radial; ++i) {
    const double t = n_radial > 1 ? double(i) / (n_radial - 1) : 0.0;
    m.radial_samples_mm.push_back(fov_radius_mm * t * t);
  }
  if (n_axial > 1 && axial_extent_mm == 0.0) n_axial = 1;
  for (int j = 0; j < n_axial; ++j) {
    const double t = n_axial > 1 ? double(j) / (n_axial - 1) : 0.0;
    m.axial_samples_mm.push_back(0.5 * axial_extent_mm * t);
  }
  for (double r : m.radial_samples_mm) {
    const double fwhm = inner_fwhm_mm + (outer_fwhm_mm - inner_fwhm_mm) * (r / fov_radius_mm);
    m.sigma_mm.emplace_back(m.axial_samples_mm.size(), fwhm_to_sigma(fwhm));
  }
  return m;
}

PsfModel constant_psf_model(double sigma_mm) {
  PsfModel m{{0.0}, {0.0}, {{sigma_mm}}};
  m.validate();
  return m;
}

namespace {

struct Bracket {
  std::size_t lo;
  std::size_t hi;
  double t;
};

Bracket bracket(const std::vector<double>& s, double q) {
  if (q <= s.front()) return {0, 0, 0.0};
  if (q >= s.back()) return {s.size() - 1, s.size() - 1, 0.0};
  const auto it = std::upper_bound(s.begin(), s.end(), q);
  const std::size_t hi = static_cast<std::size_t>(it - s.begin());
  const std::size_t lo = hi - 1;
  return {lo, hi, (q - s[lo]) / (s[hi] - s[lo])};
}

}  // namespace

double interpolate_sigma(const PsfModel& model, double radius_mm, double axial_mm) {
  const Bracket r = bracket(model.radial_samples_mm, std::abs(radius_mm));
  const Bracket a = bracket(model.axial_samples_mm, std::abs(axial_mm));
  const auto& s = model.sigma_mm;
  return (1.0 - r.t) * ((1.0 - a.t) * s[r.lo][a.lo] + a.t * s[r.lo][a.hi]) +
         r.t * ((1.0 - a.t) * s[r.hi][a.lo] + a.t * s[r.hi][a.hi]);
}

ImageGrid sigma_map(const ImageGrid& grid, const PsfModel& model) {
  model.validate();
  ImageGrid out = grid.like();
  out.modality = Modality::GENERIC;
  const double cx = 0.5 * (grid.dims.nx - 1);
  const double cy = 0.5 * (grid.dims.ny - 1);
  const double cz = 0.5 * (grid.dims.nz - 1);
  const auto& v = grid.voxel_size_mm;
  for (int z = 0; z < grid.dims.nz; ++z)
    for (int y = 0; y < grid.dims.ny; ++y)
      for (int x = 0; x < grid.dims.nx; ++x) {
        const double r = std::hypot((x - cx) * v[0], (y - cy) * v[1]);
        out.at(x, y, z) = interpolate_sigma(model, r, (z - cz) * v[2]);
      }
  return out;
}

namespace {

struct AxisTaps {
  std::vector<int> idx;
  std::vector<double> w;
};

// Gaussian taps around `center` with clamped indices merged, so the sum over
// the compact list equals the edge-clamped convolution exactly.
void clamped_taps(int center, int n, double sigma_vox, AxisTaps& out) {
  out.idx.clear();
  out.w.clear();
  if (n == 1) {
    out.idx.push_back(0);
    out.w.push_back(1.0);
    return;
  }
  const auto g = gaussian_taps(sigma_vox);
  const int radius = static_cast<int>(g.size() / 2);
  const int first = std::clamp(center - radius, 0, n - 1);
  const int last = std::clamp(center + radius, 0, n - 1);
  out.idx.resize(last - first + 1);
  out.w.assign(last - first + 1, 0.0);
  for (int j = first; j <= last; ++j) out.idx[j - first] = j;
  for (int k = -radius; k <= radius; ++k) {
    const int j = std::clamp(center + k, 0, n - 1);
    out.w[j - first] += g[k + radius];
  }
}

}  // namespace

ImageGrid apply_spatially_variant_blur(const ImageGrid& image, const PsfModel& model) {
  image.validate();
  const ImageGrid sig = sigma_map(image, model);
  ImageGrid out = image.like();
  const Dims d = image.dims;
  const auto& v = image.voxel_size_mm;
  const int n_rows = d.ny * d.nz;

#pragma omp parallel
  {
    AxisTaps tx, ty, tz;
#pragma omp for schedule(dynamic, 4)
    for (int row = 0; row < n_rows; ++row) {
      const int y = row % d.ny;
      const int z = row / d.ny;
      for (int x = 0; x < d.nx; ++x) {
        const double s = sig.at(x, y, z);
        clamped_taps(x, d.nx, s / v[0], tx);
        clamped_taps(y, d.ny, s / v[1], ty);
        clamped_taps(z, d.nz, s / v[2], tz);
        double acc = 0.0;
        for (std::size_t c = 0; c < tz.idx.size(); ++c) {
          double acc_y = 0.0;
          for (std::size_t b = 0; b < ty.idx.size(); ++b) {
            const double* line = image.data.data() + image.index(0, ty.idx[b], tz.idx[c]);
            double acc_x = 0.0;
            for (std::size_t a = 0; a < tx.idx.size(); ++a) acc_x += tx.w[a] * line[tx.idx[a]];
            acc_y += ty.w[b] * acc_x;
          }
          acc += tz.w[c] * acc_y;
        }
        out.at(x, y, z) = acc;
      }
    }
  }
  return out;
}

ImageGrid apply_spatially_variant_blur_adjoint(const ImageGrid& image, const PsfModel& model) {
  image.validate();
  const ImageGrid sig = sigma_map(image, model);
  ImageGrid out = image.like();
  out.modality = Modality::GENERIC;
  const Dims d = image.dims;
  const auto& v = image.voxel_size_mm;
  AxisTaps tx, ty, tz;
  // Scatter; kept serial so the accumulation order is fixed.
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double r = image.at(x, y, z);
        if (r == 0.0) continue;
        const double s = sig.at(x, y, z);
        clamped_taps(x, d.nx, s / v[0], tx);
        clamped_taps(y, d.ny, s / v[1], ty);
        clamped_taps(z, d.nz, s / v[2], tz);
        for (std::size_t c = 0; c < tz.idx.size(); ++c)
          for (std::size_t b = 0; b < ty.idx.size(); ++b) {
            const double wyz = tz.w[c] * ty.w[b] * r;
            double* line = out.data.data() + out.index(0, ty.idx[b], tz.idx[c]);
            for (std::size_t a = 0; a < tx.idx.size(); ++a) line[tx.idx[a]] += tx.w[a] * wyz;
          }
      }
  return out;
}

PsfModel read_psf_model(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  PsfModel m;
  try {
    m.radial_samples_mm = j.at("radial_samples_mm").get<std::vector<double>>();
    m.axial_samples_mm = j.at("axial_samples_mm").get<std::vector<double>>();
    m.sigma_mm = j.at("sigma_mm").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, std::string("bad PSF model: ") + e.what());
  }
  m.validate();
  return m;
}

void write_psf_model(const PsfModel& model, const std::filesystem::path& path) {
  model.validate();
  Json j;
  j["radial_samples_mm"] = model.radial_samples_mm;
  j["axial_samples_mm"] = model.axial_samples_mm;
  j["sigma_mm"] = model.sigma_mm;
  j["symmetry"] = "radial-axial";
  write_json_file(j, path);
}

}  // namespace petsr
