#include "petsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "petsr/error.hpp"
#include "petsr/json_io.hpp"

namespace petsr {

namespace {

void check_pair(const ImageGrid& est, const ImageGrid& ref, const Mask& mask) {
  require(est.dims == ref.dims && est.size() == ref.size(), ErrorKind::ShapeMismatch,
          "metric inputs differ in dims");
  if (mask)
    require(mask->size() == est.size(), ErrorKind::ShapeMismatch, "mask size != image size");
}

bool selected(const Mask& mask, std::size_t i) { return !mask || (*mask)[i] != 0; }

}  // namespace

double rmse(const ImageGrid& est, const ImageGrid& ref, const Mask& mask) {
  check_pair(est, ref, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!selected(mask, i)) continue;
    const double d = est.data[i] - ref.data[i];
    sum += d * d;
    ++n;
  }
  require(n > 0, ErrorKind::InvalidArgument, "metric over an empty voxel set");
  return std::sqrt(sum / static_cast<double>(n));
}

double psnr(const ImageGrid& est, const ImageGrid& ref, PsnrPeak peak, const Mask& mask) {
  const double err = rmse(est, ref, mask);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  const ImageGrid& src = peak == PsnrPeak::Estimate ? est : ref;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < src.size(); ++i)
    if (selected(mask, i)) mx = std::max(mx, src.data[i]);
  return 20.0 * std::log10(mx / err);
}

double ssim(const ImageGrid& est, const ImageGrid& ref, std::optional<double> dynamic_range,
            const Mask& mask) {
  check_pair(est, ref, mask);
  double mu_e = 0.0, mu_r = 0.0;
  double ref_max = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!selected(mask, i)) continue;
    mu_e += est.data[i];
    mu_r += ref.data[i];
    ref_max = std::max(ref_max, ref.data[i]);
    ++n;
  }
  require(n > 0, ErrorKind::InvalidArgument, "metric over an empty voxel set");
  mu_e /= static_cast<double>(n);
  mu_r /= static_cast<double>(n);
  double var_e = 0.0, var_r = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!selected(mask, i)) continue;
    const double de = est.data[i] - mu_e;
    const double dr = ref.data[i] - mu_r;
    var_e += de * de;
    var_r += dr * dr;
    cov += de * dr;
  }
  var_e /= static_cast<double>(n);
  var_r /= static_cast<double>(n);
  cov /= static_cast<double>(n);

  const double L = dynamic_range.value_or(ref_max);
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const double num = (2.0 * mu_r * mu_e + c1) * (2.0 * cov + c2);
  const double den = (mu_r * mu_r + mu_e * mu_e + c1) * (var_r + var_e + c2);
  // Both images identically zero: nothing to compare, treat as identical.
  if (den == 0.0) return 1.0;
  return num / den;
}

// ---------------------------------------------------------------------------

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

const MetricsRow* MetricsReport::find(const std::string& method,
                                      const std::string& reference) const {
  for (const auto& r : rows)
    if (r.method == method && r.reference == reference) return &r;
  return nullptr;
}

void MetricsReport::validate() const {
  for (const auto& r : rows) {
    require(r.ssim >= -1.0 - 1e-12 && r.ssim <= 1.0 + 1e-12, ErrorKind::InvalidArgument,
            "SSIM outside [-1, 1] for " + r.method);
    require(!std::isnan(r.psnr), ErrorKind::NonFinite, "PSNR is NaN for " + r.method);
  }
  // rows are keyed by (method, reference)
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = i + 1; k < rows.size(); ++k)
      require(rows[i].method != rows[k].method || rows[i].reference != rows[k].reference,
              ErrorKind::InvalidArgument,
              "duplicate report row " + rows[i].method + "/" + rows[i].reference);
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "method,reference,psnr_db,ssim\n";
  for (const auto& r : rows)
    os << r.method << ',' << r.reference << ',' << format_metric(r.psnr) << ','
       << format_metric(r.ssim) << '\n';
  return os.str();
}

std::string MetricsReport::to_json() const {
  Json j;
  j["study"] = study;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["rows"] = Json::array();
  for (const auto& r : rows) {
    Json row = {{"method", r.method}, {"reference", r.reference}, {"ssim", r.ssim}};
    if (std::isinf(r.psnr))
      row["psnr_db"] = format_metric(r.psnr);
    else
      row["psnr_db"] = r.psnr;
    j["rows"].push_back(row);
  }
  j["notes"] = Json::object();
  for (const auto& [k, v] : notes) j["notes"][k] = v;
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::vector<std::string> methods, refs;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    if (std::find(refs.begin(), refs.end(), r.reference) == refs.end())
      refs.push_back(r.reference);
  }
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-8s %-10s", "Metric", "Reference");
  os << buf;
  for (const auto& m : methods) {
    std::snprintf(buf, sizeof buf, " %8s", m.c_str());
    os << buf;
  }
  os << '\n';
  for (const char* metric : {"PSNR", "SSIM"}) {
    for (const auto& ref : refs) {
      std::snprintf(buf, sizeof buf, "%-8s %-10s", metric, ref.c_str());
      os << buf;
      for (const auto& m : methods) {
        const MetricsRow* row = find(m, ref);
        if (!row) {
          std::snprintf(buf, sizeof buf, " %8s", "-");
        } else if (metric[0] == 'P') {
          if (std::isinf(row->psnr))
            std::snprintf(buf, sizeof buf, " %8s", "inf");
          else
            std::snprintf(buf, sizeof buf, " %8.2f", row->psnr);
        } else {
          std::snprintf(buf, sizeof buf, " %8.3f", row->ssim);
        }
        os << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

void MetricsReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name);
    require(bool(out), ErrorKind::Io, "cannot write " + (dir / name).string());
    out << text;
  };
  put("report.csv", to_csv());
  put("report.json", to_json());
  put("report.txt", to_table());
}

}  // namespace petsr
