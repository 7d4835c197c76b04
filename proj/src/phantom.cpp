#include "petsr/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "petsr/error.hpp"
#include "petsr/json_io.hpp"

namespace petsr {

std::string_view tissue_name(Tissue t) {
  switch (t) {
    case Tissue::Background: return "background";
    case Tissue::Gray: return "gray";
    case Tissue::White: return "white";
    case Tissue::Csf: return "csf";
    case Tissue::Blood: return "blood";
  }
  return "unknown";
}

void LabelGrid::validate() const {
  require(labels.size() == dims.count(), ErrorKind::ShapeMismatch, "label count != dims");
  for (auto l : labels)
    require(l < kTissueCount, ErrorKind::InvalidArgument, "label outside the tissue set");
}

ImageGrid LabelGrid::to_image() const {
  ImageGrid img(dims, voxel_size_mm, Modality::LABEL);
  for (std::size_t i = 0; i < labels.size(); ++i) img.data[i] = labels[i];
  return img;
}

LabelGrid LabelGrid::from_image(const ImageGrid& img) {
  LabelGrid g{img.dims, img.voxel_size_mm, std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img.data[i];
    require(v == std::round(v) && v >= 0 && v < kTissueCount, ErrorKind::Format,
            "label image holds a non-label value");
    g.labels[i] = static_cast<std::uint8_t>(v);
  }
  return g;
}

// ---------------------------------------------------------------------------

void TissueTable::validate() const {
  for (int i = 0; i < kTissueCount; ++i) {
    if (activity[i])
      require(std::isfinite(*activity[i]) && *activity[i] >= 0, ErrorKind::InvalidArgument,
              "tissue activity must be finite and non-negative");
    if (mr_mean[i])
      require(std::isfinite(*mr_mean[i]) && *mr_mean[i] >= 0, ErrorKind::InvalidArgument,
              "tissue MR mean must be finite and non-negative");
  }
  require(std::isfinite(mr_noise_sigma) && mr_noise_sigma >= 0, ErrorKind::InvalidArgument,
          "MR noise sigma must be finite and non-negative");
}

TissueTable default_tissue_table() {
  TissueTable t;
  t.activity = {0.0, 4.0, 1.0, 0.1, 2.0};
  t.mr_mean = {0.0, 0.5, 0.9, 0.2, 0.4};
  t.mr_noise_sigma = 0.02;
  return t;
}

TissueTable tissue_table_from_json(const Json& j) {
  TissueTable t;
  try {
    for (int i = 0; i < kTissueCount; ++i) {
      const std::string name(tissue_name(Tissue(i)));
      if (j.contains("activity") && j["activity"].contains(name))
        t.activity[i] = j["activity"][name].get<double>();
      if (j.contains("mr_mean") && j["mr_mean"].contains(name))
        t.mr_mean[i] = j["mr_mean"][name].get<double>();
    }
    t.mr_noise_sigma = j.value("mr_noise_sigma", 0.0);
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, std::string("bad tissue table: ") + e.what());
  }
  t.validate();
  return t;
}

Json tissue_table_to_json(const TissueTable& table) {
  Json j;
  j["activity"] = Json::object();
  j["mr_mean"] = Json::object();
  for (int i = 0; i < kTissueCount; ++i) {
    const std::string name(tissue_name(Tissue(i)));
    if (table.activity[i]) j["activity"][name] = *table.activity[i];
    if (table.mr_mean[i]) j["mr_mean"][name] = *table.mr_mean[i];
  }
  j["mr_noise_sigma"] = table.mr_noise_sigma;
  return j;
}

TissueTable read_tissue_table(const std::filesystem::path& path) {
  return tissue_table_from_json(read_json_file(path));
}

void write_tissue_table(const TissueTable& table, const std::filesystem::path& path) {
  write_json_file(tissue_table_to_json(table), path);
}

// ---------------------------------------------------------------------------

namespace {

struct Harmonics {
  std::vector<double> amp;
  std::vector<double> phase;
  int k0 = 0;

  double eval(double theta, double phase_shift = 0.0) const {
    double s = 0.0;
    for (std::size_t i = 0; i < amp.size(); ++i)
      s += amp[i] * std::cos((k0 + static_cast<int>(i)) * theta + phase[i] + phase_shift);
    return s;
  }
};

// Amplitudes scaled so that |sum| <= bound.
Harmonics draw_harmonics(std::mt19937_64& rng, int k0, int count, double bound) {
  std::uniform_real_distribution<double> ua(-1.0, 1.0);
  std::uniform_real_distribution<double> up(0.0, 2.0 * std::numbers::pi);
  Harmonics h;
  h.k0 = k0;
  for (int i = 0; i < count; ++i) {
    h.amp.push_back(ua(rng) * bound / count);
    h.phase.push_back(up(rng));
  }
  return h;
}

bool in_rotated_ellipse(double u, double v, double cu, double cv, double a, double b, double rot) {
  const double du = u - cu;
  const double dv = v - cv;
  const double c = std::cos(rot);
  const double s = std::sin(rot);
  const double p = (c * du + s * dv) / a;
  const double q = (-s * du + c * dv) / b;
  return p * p + q * q <= 1.0;
}

}  // namespace

LabelGrid generate_phantom(std::uint64_t seed, Dims dims, Vec3 voxel_mm, double variability) {
  require(dims.nx >= 32 && dims.ny >= 32 && dims.nz >= 1, ErrorKind::InvalidArgument,
          "phantom needs at least 32 voxels per in-plane axis");
  require(variability >= 0.0 && variability <= 1.0, ErrorKind::InvalidArgument,
          "variability must lie in [0, 1]");
  for (double v : voxel_mm)
    require(v > 0.0, ErrorKind::InvalidArgument, "voxel size must be positive");

  // Every draw happens regardless of variability so the stream stays aligned.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const Harmonics head = draw_harmonics(rng, 2, 4, 0.08);
  const Harmonics cortex = draw_harmonics(rng, 6, 5, 0.10);
  double d[8];
  for (double& x : d) x = ud(rng);
  const double var = variability;

  const double head_a = 0.74 * (1.0 + 0.05 * var * d[0]);
  const double head_b = 0.86 * (1.0 + 0.05 * var * d[1]);
  const double vent_dx = 0.14 + 0.04 * var * d[2];
  const double vent_dy = -0.05 + 0.05 * var * d[3];
  const double vent_scale = 1.0 + 0.25 * var * d[4];
  const double vent_rot = 0.25 + 0.15 * var * d[5];
  const double blood_u = 0.10 * var * d[6];
  const double blood_v = 0.58 + 0.05 * var * d[7];

  LabelGrid g{dims, voxel_mm, std::vector<std::uint8_t>(dims.count(), 0)};
  const double cx = 0.5 * (dims.nx - 1);
  const double cy = 0.5 * (dims.ny - 1);
  const double cz = 0.5 * (dims.nz - 1);
  for (int z = 0; z < dims.nz; ++z) {
    const double w = dims.nz > 1 ? (z - cz) / (0.5 * dims.nz) : 0.0;
    const double s = std::sqrt(1.0 - 0.3 * w * w);
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const double u = (x - cx) / (0.5 * dims.nx);
        const double v = (y - cy) / (0.5 * dims.ny);
        const double theta = std::atan2(v / head_b, u / head_a);
        const double rho = std::hypot(u / (head_a * s), v / (head_b * s));
        const double r_head = 1.0 + var * head.eval(theta);
        if (rho > r_head) continue;

        Tissue t = Tissue::Gray;
        const double folds = 0.05 * std::cos(9.0 * theta + 0.6 * w) +
                             0.03 * std::cos(14.0 * theta + 1.0 - 0.4 * w) +
                             var * cortex.eval(theta, 0.3 * w);
        if (rho <= 0.70 * r_head * (1.0 + folds)) t = Tissue::White;

        for (int side = -1; side <= 1; side += 2) {
          if (in_rotated_ellipse(u, v, side * vent_dx * s, vent_dy * s, 0.07 * s * vent_scale,
                                 0.22 * s * vent_scale, side * vent_rot))
            t = Tissue::Csf;
        }
        if (std::hypot(u - blood_u * s, v - blood_v * head_b * s) <= 0.07 * s) t = Tissue::Blood;
        g.labels[g.index(x, y, z)] = static_cast<std::uint8_t>(t);
      }
    }
  }

  std::array<bool, kTissueCount> seen{};
  for (auto l : g.labels) seen[l] = true;
  for (int i = 0; i < kTissueCount; ++i)
    require(seen[i], ErrorKind::InvalidArgument,
            "phantom grid too small to contain tissue '" + std::string(tissue_name(Tissue(i))) +
                "'");
  return g;
}

ImageGrid labels_to_activity(const LabelGrid& labels, const TissueTable& table) {
  labels.validate();
  table.validate();
  ImageGrid out(labels.dims, labels.voxel_size_mm, Modality::PET);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const auto l = labels.labels[i];
    require(table.activity[l].has_value(), ErrorKind::InvalidArgument,
            "tissue table has no activity for '" + std::string(tissue_name(Tissue(l))) + "'");
    out.data[i] = *table.activity[l];
  }
  out.description = "true PET activity";
  return out;
}

ImageGrid labels_to_mr(const LabelGrid& labels, const TissueTable& table, std::uint64_t seed) {
  labels.validate();
  table.validate();
  ImageGrid out(labels.dims, labels.voxel_size_mm, Modality::MR);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const auto l = labels.labels[i];
    require(table.mr_mean[l].has_value(), ErrorKind::InvalidArgument,
            "tissue table has no MR mean for '" + std::string(tissue_name(Tissue(l))) + "'");
    double v = *table.mr_mean[l];
    // Background stays at its mean so MR and PET share support.
    if (l != 0 && table.mr_noise_sigma > 0.0) v = std::max(0.0, v + table.mr_noise_sigma * noise(rng));
    out.data[i] = v;
  }
  out.description = "T1-like MR";
  return out;
}

}  // namespace petsr
