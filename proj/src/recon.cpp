#include "petsr/recon.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "petsr/error.hpp"
#include "petsr/json_io.hpp"

namespace petsr {

void ScannerGeometry::validate() const {
  require(n_angles >= 1 && n_radial_bins >= 1, ErrorKind::InvalidArgument,
          "geometry needs at least one angle and one bin");
  require(bin_width_mm > 0.0 && fov_radius_mm > 0.0 && pixel_mm > 0.0,
          ErrorKind::InvalidArgument, "geometry sizes must be positive");
  require(image_nx >= 1 && image_ny >= 1, ErrorKind::InvalidArgument,
          "reconstruction grid must be non-empty");
  require(n_radial_bins * bin_width_mm >= 2.0 * fov_radius_mm, ErrorKind::InvalidArgument,
          "radial bins do not cover the FOV diameter");
}

double ScannerGeometry::angle(int a) const { return std::numbers::pi * a / n_angles; }

ImageGrid ScannerGeometry::image_template() const {
  return ImageGrid({image_nx, image_ny, 1}, {pixel_mm, pixel_mm, pixel_mm}, Modality::PET);
}

ScannerGeometry ScannerGeometry::for_grid(std::string label, int n_angles, double bin_width_mm,
                                          int nx, int ny, double pixel_mm) {
  ScannerGeometry g;
  g.label = std::move(label);
  g.n_angles = n_angles;
  g.bin_width_mm = bin_width_mm;
  g.image_nx = nx;
  g.image_ny = ny;
  g.pixel_mm = pixel_mm;
  g.fov_radius_mm = std::hypot(0.5 * (nx - 1) * pixel_mm, 0.5 * (ny - 1) * pixel_mm) + pixel_mm;
  int bins = static_cast<int>(std::ceil(2.0 * g.fov_radius_mm / bin_width_mm)) + 1;
  if (bins % 2 == 0) ++bins;
  g.n_radial_bins = bins;
  g.validate();
  return g;
}

Sinogram::Sinogram(ScannerGeometry g, double fill)
    : geometry(std::move(g)),
      data(static_cast<std::size_t>(geometry.n_angles) * geometry.n_radial_bins, fill) {}

double Sinogram::total() const { return std::accumulate(data.begin(), data.end(), 0.0); }

void Sinogram::validate() const {
  geometry.validate();
  require(data.size() == static_cast<std::size_t>(geometry.n_angles) * geometry.n_radial_bins,
          ErrorKind::ShapeMismatch, "sinogram size does not match geometry");
  for (double v : data) {
    require(std::isfinite(v), ErrorKind::NonFinite, "sinogram contains a non-finite value");
    require(v >= 0.0, ErrorKind::InvalidArgument, "sinogram contains a negative value");
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_within_fov(const ImageGrid& slice, const ScannerGeometry& geom) {
  require(slice.dims.nz == 1, ErrorKind::InvalidArgument, "projector expects a 2D slice");
  const double rx = 0.5 * (slice.dims.nx - 1) * slice.voxel_size_mm[0];
  const double ry = 0.5 * (slice.dims.ny - 1) * slice.voxel_size_mm[1];
  require(std::hypot(rx, ry) <= geom.fov_radius_mm * (1.0 + 1e-12), ErrorKind::InvalidArgument,
          "image extends beyond the scanner FOV");
}

struct Footprint {
  int bin;
  double w_lo;
  double w_hi;
};

inline Footprint footprint(double t, const ScannerGeometry& g) {
  const double u = t / g.bin_width_mm + 0.5 * (g.n_radial_bins - 1);
  const double fl = std::floor(u);
  const double f = u - fl;
  return {static_cast<int>(fl), 1.0 - f, f};
}

}  // namespace

void forward_project_angles(const ImageGrid& slice, const ScannerGeometry& geom,
                            std::span<const int> angles, Sinogram& out) {
  const int nx = slice.dims.nx;
  const int ny = slice.dims.ny;
  const double px = slice.voxel_size_mm[0];
  const double py = slice.voxel_size_mm[1];
  const double weight = px * py / geom.bin_width_mm;
  const double cx = 0.5 * (nx - 1);
  const double cy = 0.5 * (ny - 1);
  const int nb = geom.n_radial_bins;
  const int n_sel = static_cast<int>(angles.size());

#pragma omp parallel for schedule(static)
  for (int s = 0; s < n_sel; ++s) {
    const int a = angles[s];
    const double c = std::cos(geom.angle(a));
    const double sn = std::sin(geom.angle(a));
    double* row = out.data.data() + static_cast<std::size_t>(a) * nb;
    std::fill(row, row + nb, 0.0);
    for (int y = 0; y < ny; ++y) {
      const double ym = (y - cy) * py;
      for (int x = 0; x < nx; ++x) {
        const double v = slice.data[static_cast<std::size_t>(y) * nx + x];
        if (v == 0.0) continue;
        const Footprint fp = footprint((x - cx) * px * c + ym * sn, geom);
        if (fp.bin >= 0 && fp.bin < nb) row[fp.bin] += fp.w_lo * weight * v;
        if (fp.bin + 1 >= 0 && fp.bin + 1 < nb) row[fp.bin + 1] += fp.w_hi * weight * v;
      }
    }
  }
}

void back_project_angles(const Sinogram& sino, std::span<const int> angles, ImageGrid& out) {
  const ScannerGeometry& geom = sino.geometry;
  const int nx = out.dims.nx;
  const int ny = out.dims.ny;
  const double px = out.voxel_size_mm[0];
  const double py = out.voxel_size_mm[1];
  const double weight = px * py / geom.bin_width_mm;
  const double cx = 0.5 * (nx - 1);
  const double cy = 0.5 * (ny - 1);
  const int nb = geom.n_radial_bins;

  std::vector<double> cs(angles.size()), sn(angles.size());
  for (std::size_t s = 0; s < angles.size(); ++s) {
    cs[s] = std::cos(geom.angle(angles[s]));
    sn[s] = std::sin(geom.angle(angles[s]));
  }

#pragma omp parallel for schedule(static)
  for (int y = 0; y < ny; ++y) {
    const double ym = (y - cy) * py;
    for (int x = 0; x < nx; ++x) {
      const double xm = (x - cx) * px;
      double acc = 0.0;
      for (std::size_t s = 0; s < angles.size(); ++s) {
        const double* row = sino.data.data() + static_cast<std::size_t>(angles[s]) * nb;
        const Footprint fp = footprint(xm * cs[s] + ym * sn[s], geom);
        if (fp.bin >= 0 && fp.bin < nb) acc += fp.w_lo * row[fp.bin];
        if (fp.bin + 1 >= 0 && fp.bin + 1 < nb) acc += fp.w_hi * row[fp.bin + 1];
      }
      out.data[static_cast<std::size_t>(y) * nx + x] = acc * weight;
    }
  }
}

namespace {

std::vector<int> all_angles(int n) {
  std::vector<int> a(n);
  std::iota(a.begin(), a.end(), 0);
  return a;
}

}  // namespace

Sinogram forward_project(const ImageGrid& slice, const ScannerGeometry& geom) {
  geom.validate();
  slice.validate();
  check_within_fov(slice, geom);
  Sinogram out(geom);
  const auto angles = all_angles(geom.n_angles);
  forward_project_angles(slice, geom, angles, out);
  return out;
}

ImageGrid back_project(const Sinogram& sino, const ImageGrid& grid) {
  sino.geometry.validate();
  require(sino.data.size() ==
              static_cast<std::size_t>(sino.geometry.n_angles) * sino.geometry.n_radial_bins,
          ErrorKind::ShapeMismatch, "sinogram size does not match geometry");
  check_within_fov(grid, sino.geometry);
  ImageGrid out = grid.like();
  out.modality = Modality::GENERIC;
  const auto angles = all_angles(sino.geometry.n_angles);
  back_project_angles(sino, angles, out);
  return out;
}

ImageGrid back_project(const Sinogram& sino) {
  return back_project(sino, sino.geometry.image_template());
}

// ---------------------------------------------------------------------------

PoissonSample poisson_sample(const Sinogram& sino, double total_counts, std::uint64_t seed) {
  sino.validate();
  require(total_counts > 0.0 && std::isfinite(total_counts), ErrorKind::InvalidArgument,
          "total counts must be positive");
  const double total = sino.total();
  require(total > 0.0, ErrorKind::InvalidArgument, "cannot sample a zero-total sinogram");

  PoissonSample out{Sinogram(sino.geometry), total_counts / total};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < sino.data.size(); ++i) {
    const double mean = sino.data[i] * out.scale;
    if (mean <= 0.0) continue;
    std::poisson_distribution<long long> draw(mean);
    out.counts.data[i] = static_cast<double>(draw(rng));
  }
  return out;
}

double poisson_log_likelihood(const Sinogram& measured, const Sinogram& expected) {
  require(measured.data.size() == expected.data.size(), ErrorKind::ShapeMismatch,
          "sinogram sizes differ");
  double ll = 0.0;
  for (std::size_t i = 0; i < measured.data.size(); ++i) {
    const double y = measured.data[i];
    const double hx = expected.data[i];
    if (y > 0.0) {
      require(hx > 0.0, ErrorKind::InvalidArgument, "log-likelihood undefined: Hx = 0 with y > 0");
      ll += y * std::log(hx);
    }
    ll -= hx;
  }
  return ll;
}

std::vector<std::vector<int>> interleaved_subsets(int n_angles, int n_subsets) {
  require(n_subsets >= 1 && n_angles % n_subsets == 0, ErrorKind::InvalidArgument,
          "number of subsets must divide the number of angles");
  std::vector<std::vector<int>> subsets(n_subsets);
  for (int a = 0; a < n_angles; ++a) subsets[a % n_subsets].push_back(a);
  return subsets;
}

ImageGrid osem_reconstruct(const Sinogram& sino, int n_iterations, int n_subsets,
                           const std::optional<ImageGrid>& init, const OsemObserver& observer) {
  sino.validate();
  require(n_iterations >= 0, ErrorKind::InvalidArgument, "iterations must be >= 0");
  const ScannerGeometry& geom = sino.geometry;
  const auto subsets = interleaved_subsets(geom.n_angles, n_subsets);

  ImageGrid x = geom.image_template();
  check_within_fov(x, geom);
  if (init) {
    require(init->dims == x.dims, ErrorKind::ShapeMismatch,
            "initial image does not match the reconstruction grid");
    // Zero voxels stay zero under the multiplicative update; that is allowed
    // (support constraints) as long as something is positive.
    double total = 0.0;
    for (double v : init->data) {
      require(v >= 0.0 && std::isfinite(v), ErrorKind::InvalidArgument,
              "initial image must be non-negative and finite");
      total += v;
    }
    require(total > 0.0, ErrorKind::InvalidArgument, "initial image is all zero");
    x.data = init->data;
  } else {
    ImageGrid ones = x.like(1.0);
    const double h1 = forward_project(ones, geom).total();
    const double level = sino.total() > 0.0 ? sino.total() / h1 : 1.0;
    std::fill(x.data.begin(), x.data.end(), level);
  }

  std::vector<ImageGrid> sensitivity;
  for (const auto& subset : subsets) {
    Sinogram ones(geom, 0.0);
    for (int a : subset)
      std::fill_n(ones.data.begin() + static_cast<std::ptrdiff_t>(a) * geom.n_radial_bins,
                  geom.n_radial_bins, 1.0);
    ImageGrid s = x.like();
    back_project_angles(ones, subset, s);
    sensitivity.push_back(std::move(s));
  }

  Sinogram expected(geom);
  Sinogram ratio(geom);
  ImageGrid correction = x.like();
  for (int it = 0; it < n_iterations; ++it) {
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      const auto& subset = subsets[s];
      forward_project_angles(x, geom, subset, expected);
      double peak = 0.0;
      for (int a : subset)
        for (int b = 0; b < geom.n_radial_bins; ++b) peak = std::max(peak, expected.at(a, b));
      const double guard = 1e-12 * peak;
      for (int a : subset)
        for (int b = 0; b < geom.n_radial_bins; ++b) {
          const double y = sino.at(a, b);
          const double hx = expected.at(a, b);
          ratio.at(a, b) = y == 0.0 ? 0.0 : y / std::max(hx, guard);
        }
      back_project_angles(ratio, subset, correction);
      const auto& sens = sensitivity[s].data;
      for (std::size_t k = 0; k < x.data.size(); ++k)
        if (sens[k] > 0.0) x.data[k] *= correction.data[k] / sens[k];
    }
    if (observer) observer(it + 1, x);
  }
  x.modality = Modality::PET;
  x.description = "OSEM reconstruction";
  return x;
}

// ---------------------------------------------------------------------------

void write_sinogram(const Sinogram& sino, const std::filesystem::path& path) {
  sino.validate();
  const auto& g = sino.geometry;
  ImageGrid grid({g.n_radial_bins, g.n_angles, 1}, {g.bin_width_mm, 1.0, 1.0}, Modality::GENERIC);
  grid.data = sino.data;
  grid.description = "sinogram (radial bin fastest, angle slowest)";
  Json extra;
  extra["geometry"] = {{"n_angles", g.n_angles},         {"n_radial_bins", g.n_radial_bins},
                       {"bin_width_mm", g.bin_width_mm}, {"fov_radius_mm", g.fov_radius_mm},
                       {"label", g.label},               {"image_nx", g.image_nx},
                       {"image_ny", g.image_ny},         {"pixel_mm", g.pixel_mm}};
  write_volume(grid, path, extra);
}

Sinogram read_sinogram(const std::filesystem::path& path) {
  auto [grid, side] = read_volume_with_sidecar(path);
  ScannerGeometry g;
  try {
    const Json& j = side.at("geometry");
    g.n_angles = j.at("n_angles").get<int>();
    g.n_radial_bins = j.at("n_radial_bins").get<int>();
    g.bin_width_mm = j.at("bin_width_mm").get<double>();
    g.fov_radius_mm = j.at("fov_radius_mm").get<double>();
    g.label = j.value("label", std::string{});
    g.image_nx = j.at("image_nx").get<int>();
    g.image_ny = j.at("image_ny").get<int>();
    g.pixel_mm = j.at("pixel_mm").get<double>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, std::string("sinogram sidecar lacks geometry: ") + e.what());
  }
  require(grid.dims.nx == g.n_radial_bins && grid.dims.ny == g.n_angles, ErrorKind::ShapeMismatch,
          "sinogram dims disagree with embedded geometry");
  Sinogram s(g);
  s.data = std::move(grid.data);
  s.validate();
  return s;
}

}  // namespace petsr
