#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "petsr/volume.hpp"

namespace petsr {

/// Optional voxel mask; non-zero entries are evaluated.
using Mask = std::optional<std::vector<std::uint8_t>>;

double rmse(const ImageGrid& est, const ImageGrid& ref, const Mask& mask = std::nullopt);

enum class PsnrPeak {
  Estimate,   ///< max of the estimate, as used throughout the evaluation
  Reference,  ///< conventional max of the reference
};

/// 20 log10(peak / RMSE). Returns +infinity when the RMSE is zero.
double psnr(const ImageGrid& est, const ImageGrid& ref, PsnrPeak peak = PsnrPeak::Estimate,
            const Mask& mask = std::nullopt);

/// Global-statistics SSIM with c1 = (0.01 L)^2, c2 = (0.03 L)^2. L defaults
/// to max(ref).
double ssim(const ImageGrid& est, const ImageGrid& ref, std::optional<double> dynamic_range = {},
            const Mask& mask = std::nullopt);

struct MetricsRow {
  std::string method;
  std::string reference;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::string study;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<MetricsRow> rows;
  /// Free-form notes, e.g. the penalty weights picked by the beta search.
  std::vector<std::pair<std::string, std::string>> notes;

  const MetricsRow* find(const std::string& method, const std::string& reference) const;

  void validate() const;
  std::string to_csv() const;
  std::string to_json() const;
  /// Metric x reference rows, one column per method.
  std::string to_table() const;
  void write(const std::filesystem::path& dir) const;
};

/// "inf" for infinite PSNR, fixed 6-decimal otherwise.
std::string format_metric(double v);

}  // namespace petsr
