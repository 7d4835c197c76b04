#include "petsr/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "petsr/error.hpp"
#include "petsr/json_io.hpp"

namespace petsr {

namespace fs = std::filesystem;

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::PET: return "PET";
    case Modality::MR: return "MR";
    case Modality::LABEL: return "LABEL";
    case Modality::GENERIC: return "GENERIC";
  }
  return "GENERIC";
}

Modality modality_from_string(std::string_view s) {
  if (s == "PET") return Modality::PET;
  if (s == "MR") return Modality::MR;
  if (s == "LABEL") return Modality::LABEL;
  if (s == "GENERIC") return Modality::GENERIC;
  fail(ErrorKind::Format, "unknown modality '" + std::string(s) + "'");
}

bool ImageGrid::same_geometry(const ImageGrid& other) const {
  return dims == other.dims && voxel_size_mm == other.voxel_size_mm;
}

void ImageGrid::validate() const {
  require(dims.nx >= 1 && dims.ny >= 1 && dims.nz >= 1, ErrorKind::InvalidArgument,
          "grid dims must be >= 1");
  require(data.size() == dims.count(), ErrorKind::ShapeMismatch,
          "grid data length " + std::to_string(data.size()) + " != " +
              std::to_string(dims.count()));
  for (double v : voxel_size_mm)
    require(v > 0.0 && std::isfinite(v), ErrorKind::InvalidArgument,
            "voxel size must be positive");
  for (double v : data) {
    require(std::isfinite(v), ErrorKind::NonFinite, "grid contains a non-finite value");
    if (modality == Modality::PET)
      require(v >= 0.0, ErrorKind::InvalidArgument, "PET grid contains a negative value");
  }
}

ImageGrid extract_slice(const ImageGrid& grid, int z) {
  require(z >= 0 && z < grid.dims.nz, ErrorKind::InvalidArgument, "slice index out of range");
  ImageGrid s({grid.dims.nx, grid.dims.ny, 1}, grid.voxel_size_mm, grid.modality);
  const std::size_t plane = static_cast<std::size_t>(grid.dims.nx) * grid.dims.ny;
  std::copy_n(grid.data.begin() + plane * z, plane, s.data.begin());
  return s;
}

void insert_slice(ImageGrid& grid, const ImageGrid& slice, int z) {
  require(slice.dims.nx == grid.dims.nx && slice.dims.ny == grid.dims.ny && slice.dims.nz == 1,
          ErrorKind::ShapeMismatch, "slice does not match grid plane");
  const std::size_t plane = static_cast<std::size_t>(grid.dims.nx) * grid.dims.ny;
  std::copy_n(slice.data.begin(), plane, grid.data.begin() + plane * z);
}

// ---------------------------------------------------------------------------
// File format

fs::path volume_base(const fs::path& path) {
  auto ext = path.extension();
  if (ext == ".raw" || ext == ".json") return fs::path(path).replace_extension();
  return path;
}

namespace {

fs::path with_ext(const fs::path& base, const char* ext) {
  return fs::path(base.string() + ext);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, "corrupt JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(bool(out), ErrorKind::Io, "write failed for " + path.string());
}

void write_volume(const ImageGrid& grid, const fs::path& path, const Json& extra) {
  grid.validate();
  const auto base = volume_base(path);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());

  std::vector<std::uint32_t> words(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const float f = static_cast<float>(grid.data[i]);
    words[i] = to_le(std::bit_cast<std::uint32_t>(f));
  }
  {
    std::ofstream raw(with_ext(base, ".raw"), std::ios::binary);
    require(bool(raw), ErrorKind::Io, "cannot write " + with_ext(base, ".raw").string());
    raw.write(reinterpret_cast<const char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    require(bool(raw), ErrorKind::Io, "write failed for " + with_ext(base, ".raw").string());
  }

  Json side = extra.is_object() ? extra : Json::object();
  side["dims"] = {grid.dims.nx, grid.dims.ny, grid.dims.nz};
  side["voxel_size_mm"] = {grid.voxel_size_mm[0], grid.voxel_size_mm[1], grid.voxel_size_mm[2]};
  side["modality"] = std::string(to_string(grid.modality));
  side["description"] = grid.description;
  write_json_file(side, with_ext(base, ".json"));
}

void write_volume(const ImageGrid& grid, const fs::path& path) {
  write_volume(grid, path, Json::object());
}

std::pair<ImageGrid, Json> read_volume_with_sidecar(const fs::path& path) {
  const auto base = volume_base(path);
  const auto side_path = with_ext(base, ".json");
  require(fs::exists(side_path), ErrorKind::Io, "missing sidecar " + side_path.string());
  Json side = read_json_file(side_path);

  ImageGrid grid;
  try {
    auto d = side.at("dims");
    auto v = side.at("voxel_size_mm");
    require(d.size() == 3 && v.size() == 3, ErrorKind::Format, "dims/voxel_size_mm need 3 entries");
    grid.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    grid.voxel_size_mm = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    grid.modality = modality_from_string(side.at("modality").get<std::string>());
    grid.description = side.value("description", std::string{});
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, "corrupt sidecar " + side_path.string() + ": " + e.what());
  }
  require(grid.dims.nx >= 1 && grid.dims.ny >= 1 && grid.dims.nz >= 1, ErrorKind::Format,
          "sidecar dims must be >= 1");

  const auto raw_path = with_ext(base, ".raw");
  std::ifstream raw(raw_path, std::ios::binary | std::ios::ate);
  require(bool(raw), ErrorKind::Io, "cannot open " + raw_path.string());
  const auto bytes = static_cast<std::size_t>(raw.tellg());
  const std::size_t expected = grid.dims.count() * sizeof(float);
  require(bytes == expected, ErrorKind::ShapeMismatch,
          "raw file has " + std::to_string(bytes) + " bytes, dims imply " +
              std::to_string(expected));
  raw.seekg(0);
  std::vector<std::uint32_t> words(grid.dims.count());
  raw.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  require(bool(raw), ErrorKind::Io, "read failed for " + raw_path.string());

  grid.data.resize(words.size());
  for (std::size_t i = 0; i < words.size(); ++i)
    grid.data[i] = std::bit_cast<float>(to_le(words[i]));
  grid.validate();
  return {std::move(grid), std::move(side)};
}

ImageGrid read_volume(const fs::path& path) { return read_volume_with_sidecar(path).first; }

// ---------------------------------------------------------------------------
// Separable 1D passes

namespace {

// Applies `line_op(in_line, in_stride, out_line, out_stride)` along one axis,
// producing an output whose length on that axis is `out_len`.
template <class LineOp>
ImageGrid axis_pass(const ImageGrid& in, int axis, int out_len, double out_voxel, LineOp line_op) {
  Dims od = in.dims;
  if (axis == 0) od.nx = out_len;
  if (axis == 1) od.ny = out_len;
  if (axis == 2) od.nz = out_len;
  Vec3 ov = in.voxel_size_mm;
  ov[axis] = out_voxel;
  ImageGrid out(od, ov, in.modality);
  out.description = in.description;

  const std::ptrdiff_t in_stride = axis == 0 ? 1 : axis == 1 ? in.dims.nx
                                                              : std::ptrdiff_t(in.dims.nx) * in.dims.ny;
  const std::ptrdiff_t out_stride = axis == 0 ? 1 : axis == 1 ? od.nx
                                                               : std::ptrdiff_t(od.nx) * od.ny;
  // Lines are indexed by the two remaining coordinates.
  const int a = axis == 0 ? 1 : 0;
  const int b = axis == 2 ? 1 : 2;
  const int na = in.dims[a];
  const int nb = in.dims[b];
  const int n_lines = na * nb;

#pragma omp parallel for schedule(static)
  for (int line = 0; line < n_lines; ++line) {
    int c[3] = {0, 0, 0};
    c[a] = line % na;
    c[b] = line / na;
    c[axis] = 0;
    const double* src = in.data.data() + in.index(c[0], c[1], c[2]);
    double* dst = out.data.data() + out.index(c[0], c[1], c[2]);
    line_op(src, in_stride, dst, out_stride);
  }
  return out;
}

}  // namespace

double cubic_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

ImageGrid resample_bicubic(const ImageGrid& grid, Dims target_dims, Vec3 target_voxel_mm) {
  grid.validate();
  require(target_dims.nx >= 1 && target_dims.ny >= 1 && target_dims.nz >= 1,
          ErrorKind::InvalidArgument, "target dims must be >= 1");
  for (double v : target_voxel_mm)
    require(v > 0.0 && std::isfinite(v), ErrorKind::InvalidArgument,
            "target voxel size must be positive");

  ImageGrid cur = grid;
  for (int axis = 0; axis < 3; ++axis) {
    const int n_in = cur.dims[axis];
    const int n_out = target_dims[axis];
    const double v_in = cur.voxel_size_mm[axis];
    const double v_out = target_voxel_mm[axis];
    if (n_in == n_out && v_in == v_out) continue;

    // Per output sample: source base index and four weights.
    struct Tap {
      int base;
      double w[4];
    };
    std::vector<Tap> taps(n_out);
    const double c_in = 0.5 * (n_in - 1);
    const double c_out = 0.5 * (n_out - 1);
    for (int i = 0; i < n_out; ++i) {
      const double pos = (i - c_out) * v_out / v_in + c_in;
      const double fl = std::floor(pos);
      const double f = pos - fl;
      taps[i].base = static_cast<int>(fl) - 1;
      for (int k = 0; k < 4; ++k) taps[i].w[k] = cubic_kernel(f - (k - 1));
    }
    cur = axis_pass(cur, axis, n_out, v_out,
                    [&](const double* src, std::ptrdiff_t si, double* dst, std::ptrdiff_t so) {
                      for (int i = 0; i < n_out; ++i) {
                        double acc = 0.0;
                        for (int k = 0; k < 4; ++k) {
                          const int j = std::clamp(taps[i].base + k, 0, n_in - 1);
                          acc += taps[i].w[k] * src[j * si];
                        }
                        dst[i * so] = acc;
                      }
                    });
  }
  cur.dims = target_dims;
  cur.voxel_size_mm = target_voxel_mm;
  return cur;
}

double fwhm_to_sigma_mm(double fwhm_mm) {
  require(fwhm_mm > 0.0 && std::isfinite(fwhm_mm), ErrorKind::InvalidArgument,
          "FWHM must be positive");
  return fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

std::vector<double> gaussian_taps(double sigma_voxels) {
  require(sigma_voxels >= 0.0 && std::isfinite(sigma_voxels), ErrorKind::InvalidArgument,
          "sigma must be non-negative");
  if (sigma_voxels == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma_voxels));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double t = k / sigma_voxels;
    w[k + radius] = std::exp(-0.5 * t * t);
    sum += w[k + radius];
  }
  for (double& x : w) x /= sum;
  return w;
}

ImageGrid gaussian_filter_sigma(const ImageGrid& grid, Vec3 sigma_voxels) {
  grid.validate();
  ImageGrid cur = grid;
  for (int axis = 0; axis < 3; ++axis) {
    const int n = cur.dims[axis];
    if (n == 1) continue;
    const auto w = gaussian_taps(sigma_voxels[axis]);
    const int radius = static_cast<int>(w.size() / 2);
    cur = axis_pass(cur, axis, n, cur.voxel_size_mm[axis],
                    [&](const double* src, std::ptrdiff_t si, double* dst, std::ptrdiff_t so) {
                      for (int i = 0; i < n; ++i) {
                        double acc = 0.0;
                        for (int k = -radius; k <= radius; ++k) {
                          const int j = std::clamp(i + k, 0, n - 1);
                          acc += w[k + radius] * src[j * si];
                        }
                        dst[i * so] = acc;
                      }
                    });
  }
  return cur;
}

ImageGrid gaussian_filter(const ImageGrid& grid, double fwhm_mm) {
  const double s = fwhm_to_sigma_mm(fwhm_mm);
  return gaussian_filter_sigma(grid, {s / grid.voxel_size_mm[0], s / grid.voxel_size_mm[1],
                                      s / grid.voxel_size_mm[2]});
}

}  // namespace petsr
