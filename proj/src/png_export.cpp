#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "petsr/error.hpp"
#include "petsr/volume.hpp"

namespace petsr {

Gray8 window_slice(const ImageGrid& grid, SliceAxis axis, int index,
                   std::pair<double, double> window) {
  const auto [lo, hi] = window;
  require(lo < hi, ErrorKind::InvalidArgument, "window min must be below max");
  const Dims& d = grid.dims;
  const int n_axis = axis == SliceAxis::X ? d.nx : axis == SliceAxis::Y ? d.ny : d.nz;
  require(index >= 0 && index < n_axis, ErrorKind::InvalidArgument, "slice index out of range");

  Gray8 img;
  // Image rows/columns: Z slice -> (x, y), Y slice -> (x, z), X slice -> (y, z).
  img.width = axis == SliceAxis::X ? d.ny : d.nx;
  img.height = axis == SliceAxis::Z ? d.ny : d.nz;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double v = 0.0;
      switch (axis) {
        case SliceAxis::Z: v = grid.at(c, r, index); break;
        case SliceAxis::Y: v = grid.at(c, index, r); break;
        case SliceAxis::X: v = grid.at(index, c, r); break;
      }
      const double scaled = std::round((v - lo) / (hi - lo) * 255.0);
      img.pixels[static_cast<std::size_t>(r) * img.width + c] =
          static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
    }
  }
  return img;
}

Gray8 hstack(const std::vector<Gray8>& tiles, int gutter) {
  Gray8 out;
  if (tiles.empty()) return out;
  out.height = tiles.front().height;
  for (const auto& t : tiles) {
    require(t.height == out.height, ErrorKind::ShapeMismatch, "panel tiles differ in height");
    out.width += t.width;
  }
  out.width += gutter * static_cast<int>(tiles.size() - 1);
  out.pixels.assign(static_cast<std::size_t>(out.width) * out.height, 0);
  int x0 = 0;
  for (const auto& t : tiles) {
    for (int r = 0; r < t.height; ++r)
      std::copy_n(t.pixels.begin() + static_cast<std::ptrdiff_t>(r) * t.width, t.width,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(r) * out.width + x0);
    x0 += t.width + gutter;
  }
  return out;
}

void write_png(const Gray8& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorKind::Io, "cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorKind::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height; ++r)
    png_write_row(png, image.pixels.data() + static_cast<std::size_t>(r) * image.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void export_slice_png(const ImageGrid& grid, SliceAxis axis, int index,
                      std::pair<double, double> window, const std::filesystem::path& path) {
  write_png(window_slice(grid, axis, index, window), path);
}

}  // namespace petsr
