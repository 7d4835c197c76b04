#include "petsr/reference/serial.hpp"

#include <algorithm>
#include <cmath>

#include "petsr/error.hpp"

namespace petsr::reference {

template <class T>
nn::Tensor<T> conv2d_forward(const nn::Tensor<T>& input, const nn::ConvView<T>& layer) {
  require(input.c == layer.in_ch, ErrorKind::ShapeMismatch, "channel mismatch");
  nn::Tensor<T> out(input.n, layer.out_ch, input.h, input.w);
  for (int n = 0; n < input.n; ++n)
    for (int o = 0; o < layer.out_ch; ++o)
      for (int y = 0; y < input.h; ++y)
        for (int x = 0; x < input.w; ++x) {
          T acc = layer.bias[o];
          for (int i = 0; i < layer.in_ch; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - 1, sx = x + kx - 1;
                if (sy < 0 || sy >= input.h || sx < 0 || sx >= input.w) continue;
                acc += layer.weights[((o * layer.in_ch + i) * 3 + ky) * 3 + kx] *
                       input.at(n, i, sy, sx);
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

template nn::Tensor<float> conv2d_forward<float>(const nn::Tensor<float>&,
                                                 const nn::ConvView<float>&);
template nn::Tensor<double> conv2d_forward<double>(const nn::Tensor<double>&,
                                                   const nn::ConvView<double>&);

namespace {

// Detector coordinate t (mm) -> (lower bin, weight of lower, weight of upper).
void split(double t, const ScannerGeometry& g, int& bin, double& w_lo, double& w_hi) {
  const double u = t / g.bin_width_mm + 0.5 * (g.n_radial_bins - 1);
  const double fl = std::floor(u);
  bin = static_cast<int>(fl);
  w_hi = u - fl;
  w_lo = 1.0 - w_hi;
}

}  // namespace

Sinogram forward_project(const ImageGrid& slice, const ScannerGeometry& geom) {
  Sinogram out(geom);
  const int nx = slice.dims.nx, ny = slice.dims.ny, nb = geom.n_radial_bins;
  const double px = slice.voxel_size_mm[0], py = slice.voxel_size_mm[1];
  const double weight = px * py / geom.bin_width_mm;
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      const double v = slice.data[static_cast<std::size_t>(y) * nx + x];
      const double xm = (x - 0.5 * (nx - 1)) * px, ym = (y - 0.5 * (ny - 1)) * py;
      for (int a = 0; a < geom.n_angles; ++a) {
        int b;
        double lo, hi;
        split(xm * std::cos(geom.angle(a)) + ym * std::sin(geom.angle(a)), geom, b, lo, hi);
        if (b >= 0 && b < nb) out.at(a, b) += lo * weight * v;
        if (b + 1 >= 0 && b + 1 < nb) out.at(a, b + 1) += hi * weight * v;
      }
    }
  return out;
}

ImageGrid back_project(const Sinogram& sino, const ImageGrid& grid) {
  const ScannerGeometry& geom = sino.geometry;
  ImageGrid out = grid.like();
  out.modality = Modality::GENERIC;
  const int nx = grid.dims.nx, ny = grid.dims.ny, nb = geom.n_radial_bins;
  const double px = grid.voxel_size_mm[0], py = grid.voxel_size_mm[1];
  const double weight = px * py / geom.bin_width_mm;
  for (int a = 0; a < geom.n_angles; ++a)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const double xm = (x - 0.5 * (nx - 1)) * px, ym = (y - 0.5 * (ny - 1)) * py;
        int b;
        double lo, hi;
        split(xm * std::cos(geom.angle(a)) + ym * std::sin(geom.angle(a)), geom, b, lo, hi);
        double acc = 0.0;
        if (b >= 0 && b < nb) acc += lo * sino.at(a, b);
        if (b + 1 >= 0 && b + 1 < nb) acc += hi * sino.at(a, b + 1);
        out.data[static_cast<std::size_t>(y) * nx + x] += weight * acc;
      }
  return out;
}

ImageGrid spatially_variant_blur(const ImageGrid& image, const PsfModel& model) {
  const ImageGrid sig = sigma_map(image, model);
  ImageGrid out = image.like();
  const Dims d = image.dims;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double s = sig.at(x, y, z);
        std::array<std::vector<double>, 3> w;
        for (int ax = 0; ax < 3; ++ax)
          w[ax] = d[ax] == 1 ? std::vector<double>{1.0}
                             : gaussian_taps(s / image.voxel_size_mm[ax]);
        const int rx = int(w[0].size() / 2), ry = int(w[1].size() / 2), rz = int(w[2].size() / 2);
        double acc = 0.0;
        for (int k = -rz; k <= rz; ++k)
          for (int j = -ry; j <= ry; ++j)
            for (int i = -rx; i <= rx; ++i) {
              const int xx = std::clamp(x + i, 0, d.nx - 1);
              const int yy = std::clamp(y + j, 0, d.ny - 1);
              const int zz = std::clamp(z + k, 0, d.nz - 1);
              acc += w[0][i + rx] * w[1][j + ry] * w[2][k + rz] * image.at(xx, yy, zz);
            }
        out.at(x, y, z) = acc;
      }
  return out;
}

ImageGrid gaussian_filter_sigma(const ImageGrid& grid, Vec3 sigma_voxels) {
  ImageGrid out = grid.like();
  const Dims d = grid.dims;
  std::array<std::vector<double>, 3> w;
  for (int ax = 0; ax < 3; ++ax)
    w[ax] = d[ax] == 1 ? std::vector<double>{1.0} : gaussian_taps(sigma_voxels[ax]);
  const int rx = int(w[0].size() / 2), ry = int(w[1].size() / 2), rz = int(w[2].size() / 2);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        double acc = 0.0;
        for (int k = -rz; k <= rz; ++k)
          for (int j = -ry; j <= ry; ++j)
            for (int i = -rx; i <= rx; ++i)
              acc += w[0][i + rx] * w[1][j + ry] * w[2][k + rz] *
                     grid.at(std::clamp(x + i, 0, d.nx - 1), std::clamp(y + j, 0, d.ny - 1),
                             std::clamp(z + k, 0, d.nz - 1));
        out.at(x, y, z) = acc;
      }
  return out;
}

}  // namespace petsr::reference
