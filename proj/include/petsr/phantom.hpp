#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "petsr/volume.hpp"

namespace petsr {

enum class Tissue : std::uint8_t { Background = 0, Gray = 1, White = 2, Csf = 3, Blood = 4 };
inline constexpr int kTissueCount = 5;

std::string_view tissue_name(Tissue t);

struct LabelGrid {
  Dims dims;
  Vec3 voxel_size_mm{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> labels;

  std::size_t index(int x, int y, int z = 0) const {
    return (static_cast<std::size_t>(z) * dims.ny + y) * dims.nx + x;
  }
  Tissue at(int x, int y, int z = 0) const { return Tissue(labels[index(x, y, z)]); }

  void validate() const;
  ImageGrid to_image() const;
  static LabelGrid from_image(const ImageGrid& img);
};

/// Per-tissue PET activity and MR intensity. A missing entry means the
/// tissue is undefined for that table.
struct TissueTable {
  std::array<std::optional<double>, kTissueCount> activity;
  std::array<std::optional<double>, kTissueCount> mr_mean;
  double mr_noise_sigma = 0.0;

  void validate() const;
};

/// FDG-like activity (gray 4 : white 1) with T1-like MR contrast.
TissueTable default_tissue_table();
TissueTable read_tissue_table(const std::filesystem::path& path);
void write_tissue_table(const TissueTable& table, const std::filesystem::path& path);

/// Nested deformed-ellipse head: gray ribbon around white matter, two CSF
/// ventricles and a small blood pool. `variability` in [0, 1] scales every
/// seed-driven perturbation; at 0 the geometry does not depend on the seed.
LabelGrid generate_phantom(std::uint64_t seed, Dims dims, Vec3 voxel_mm, double variability);

ImageGrid labels_to_activity(const LabelGrid& labels, const TissueTable& table);
ImageGrid labels_to_mr(const LabelGrid& labels, const TissueTable& table, std::uint64_t seed);

}  // namespace petsr
