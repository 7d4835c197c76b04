#pragma once

#include <functional>
#include <map>
#include <string>

#include "petsr/metrics.hpp"
#include "petsr/nn/train.hpp"
#include "petsr/pipeline/study.hpp"

namespace petsr::pipeline {

struct RunOptions {
  bool write_volumes = true;
  bool write_png = true;
  std::function<void(const std::string&)> log;
};

struct StudyResult {
  MetricsReport report;
  std::map<std::string, nn::TrainHistory> histories;
  /// Penalty weight picked for TV / JE.
  std::map<std::string, double> betas;
  /// SR volumes per method, validation subjects in dataset order.
  std::map<std::string, std::vector<ImageGrid>> outputs;
  std::vector<std::string> failures;
};

/// Mean PSNR/SSIM over subjects of each estimate against its reference.
MetricsRow mean_metrics(const std::string& method, const std::string& reference,
                        const std::vector<ImageGrid>& estimates,
                        const std::vector<ImageGrid>& references);

/// Runs every requested method on the validation subjects and writes
/// volumes/, checkpoints/, png/ and report.{csv,json,txt} under the output
/// directory. A supplied dataset is used instead of synthesizing one.
StudyResult run_study(const StudyConfig& cfg, const RunOptions& opt = {},
                      const StudyDataset* dataset = nullptr);

}  // namespace petsr::pipeline
