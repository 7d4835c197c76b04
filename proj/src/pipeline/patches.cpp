#include "petsr/pipeline/patches.hpp"

#include <algorithm>
#include <cmath>

#include "petsr/error.hpp"

namespace petsr::pipeline {

NormalizedCase normalize_case(const SubjectCase& c) {
  NormalizedCase out{c, {}, c.lr};
  const double lr_max = *std::max_element(c.lr.data.begin(), c.lr.data.end());
  require(lr_max > 0.0, ErrorKind::InvalidArgument,
          "subject " + std::to_string(c.id) + " has an all-zero LR image");
  out.norm.pet_scale = 1.0 / lr_max;
  for (double& v : out.data.lr.data) v *= out.norm.pet_scale;
  for (double& v : out.data.target.data) v *= out.norm.pet_scale;

  const auto [lo, hi] = std::minmax_element(c.mr.data.begin(), c.mr.data.end());
  out.norm.mr_offset = *lo;
  out.norm.mr_scale = *hi > *lo ? 1.0 / (*hi - *lo) : 1.0;
  for (double& v : out.data.mr.data) v = (v - out.norm.mr_offset) * out.norm.mr_scale;
  return out;
}

ImageGrid denormalize_pet(const ImageGrid& pet, const NormRecord& norm) {
  ImageGrid out = pet;
  for (double& v : out.data) v /= norm.pet_scale;
  return out;
}

double max_radius_mm(const ImageGrid& grid) {
  return std::hypot(0.5 * (grid.dims.nx - 1) * grid.voxel_size_mm[0],
                    0.5 * (grid.dims.ny - 1) * grid.voxel_size_mm[1]);
}

nn::Tensor<float> assemble_slice(const SubjectCase& c, const nn::NetworkSpec& spec, int z) {
  const Dims d = c.lr.dims;
  require(z >= 0 && z < d.nz, ErrorKind::InvalidArgument, "slice index out of range");
  if (spec.uses(nn::InputChannel::HrMr))
    require(c.mr.dims == d, ErrorKind::ShapeMismatch, "MR and LR PET grids differ");
  const int C = static_cast<int>(spec.inputs.size());
  nn::Tensor<float> t(1, C, d.ny, d.nx);
  const double cx = 0.5 * (d.nx - 1), cy = 0.5 * (d.ny - 1);
  const double rmax = max_radius_mm(c.lr);
  const double axial = d.nz > 1 ? static_cast<double>(z) / (d.nz - 1) : 0.0;
  const auto& v = c.lr.voxel_size_mm;
  for (int ch = 0; ch < C; ++ch) {
    float* dst = t.sample(0) + ch * t.plane();
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        double val = 0.0;
        switch (spec.inputs[ch]) {
          case nn::InputChannel::LrPet: val = c.lr.at(x, y, z); break;
          case nn::InputChannel::HrMr: val = c.mr.at(x, y, z); break;
          case nn::InputChannel::Radial:
            val = rmax > 0.0 ? std::hypot((x - cx) * v[0], (y - cy) * v[1]) / rmax : 0.0;
            break;
          case nn::InputChannel::Axial: val = axial; break;
        }
        dst[static_cast<std::size_t>(y) * d.nx + x] = static_cast<float>(val);
      }
  }
  return t;
}

std::vector<int> patch_origins(int n, int patch, int stride) {
  require(patch >= 1 && patch <= n, ErrorKind::InvalidArgument,
          "patch size " + std::to_string(patch) + " larger than image extent " +
              std::to_string(n));
  require(stride >= 1, ErrorKind::InvalidArgument, "patch stride must be >= 1");
  std::vector<int> o;
  for (int p = 0; p + patch <= n; p += stride) o.push_back(p);
  if (o.back() + patch < n) o.push_back(n - patch);
  return o;
}

nn::PatchSet extract_patches(const SubjectCase& c, const nn::NetworkSpec& spec, int patch_size,
                             int stride) {
  spec.validate();
  require(c.target.dims == c.lr.dims, ErrorKind::ShapeMismatch, "LR and target grids differ");
  const Dims d = c.lr.dims;
  const auto ox = patch_origins(d.nx, patch_size, stride);
  const auto oy = patch_origins(d.ny, patch_size, stride);
  const int C = static_cast<int>(spec.inputs.size());
  const int per_slice = static_cast<int>(ox.size() * oy.size());
  const int P = patch_size;

  nn::PatchSet set;
  set.channels = spec.inputs;
  set.inputs = nn::Tensor<float>(per_slice * d.nz, C, P, P);
  set.targets = nn::Tensor<float>(per_slice * d.nz, 1, P, P);
  set.meta.reserve(per_slice * d.nz);
  const double cx = 0.5 * (d.nx - 1), cy = 0.5 * (d.ny - 1), cz = 0.5 * (d.nz - 1);
  const auto& v = c.lr.voxel_size_mm;

  int k = 0;
  for (int z = 0; z < d.nz; ++z) {
    const nn::Tensor<float> full = assemble_slice(c, spec, z);
    for (int y0 : oy)
      for (int x0 : ox) {
        for (int ch = 0; ch < C; ++ch)
          for (int y = 0; y < P; ++y)
            for (int x = 0; x < P; ++x)
              set.inputs.at(k, ch, y, x) = full.at(0, ch, y0 + y, x0 + x);
        for (int y = 0; y < P; ++y)
          for (int x = 0; x < P; ++x)
            set.targets.at(k, 0, y, x) = static_cast<float>(
                c.target.at(x0 + x, y0 + y, z) - c.lr.at(x0 + x, y0 + y, z));
        nn::PatchMeta m;
        m.subject_id = c.id;
        m.slice = z;
        m.y0 = y0;
        m.x0 = x0;
        m.radius_mm = std::hypot((x0 + P / 2 - cx) * v[0], (y0 + P / 2 - cy) * v[1]);
        m.axial_mm = (z - cz) * v[2];
        set.meta.push_back(m);
        ++k;
      }
  }
  return set;
}

ImageGrid infer(const nn::Network<float>& net, const NormalizedCase& nc) {
  const SubjectCase& c = nc.data;
  const Dims d = c.lr.dims;
  const nn::NetworkSpec& spec = net.spec();
  const int C = static_cast<int>(spec.inputs.size());
  nn::Tensor<float> batch(d.nz, C, d.ny, d.nx);
  for (int z = 0; z < d.nz; ++z) {
    const nn::Tensor<float> s = assemble_slice(c, spec, z);
    std::copy(s.data.begin(), s.data.end(), batch.sample(z));
  }
  const nn::Tensor<float> residual = net.forward(batch);
  ImageGrid sr = c.lr.like();
  sr.modality = Modality::GENERIC;
  sr.description = std::string(nn::to_string(spec.variant)) + " SR";
  const std::size_t plane = static_cast<std::size_t>(d.nx) * d.ny;
  for (int z = 0; z < d.nz; ++z)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t g = z * plane + i;
      sr.data[g] = nc.input_pet.data[g] + static_cast<double>(residual.sample(z)[i]) / nc.norm.pet_scale;
    }
  return sr;
}

}  // namespace petsr::pipeline
