#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "petsr/nn/network.hpp"
#include "petsr/nn/tensor.hpp"

namespace petsr::nn {

/// Where a patch came from.
struct PatchMeta {
  int subject_id = 0;
  int slice = 0;
  int y0 = 0;
  int x0 = 0;
  double radius_mm = 0.0;  // patch center, from the image center
  double axial_mm = 0.0;
};

/// N patches: inputs (N, channels, P, P) in network channel order and the
/// target residual (N, 1, P, P) = HR - LR.
struct PatchSet {
  std::vector<InputChannel> channels;
  Tensor<float> inputs;
  Tensor<float> targets;
  std::vector<PatchMeta> meta;

  int size() const { return inputs.n; }
  bool empty() const { return inputs.n == 0; }
  void validate() const;
  /// Concatenates sets with identical channels and patch size.
  static PatchSet concat(const std::vector<PatchSet>& parts);
};

struct TrainConfig {
  int epochs = 400;
  int batch_size = 10;
  double learning_rate = 3e-4;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation set
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;  // epochs[0] is the state before any update

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Mean L1 between predicted and target residual over the whole set.
double evaluate_loss(const Network<float>& net, const PatchSet& set, int chunk = 32);

/// Minibatch Adam on the L1 residual loss. The train loss of epoch e >= 1 is
/// the sample-weighted mean of the minibatch losses seen during that epoch.
TrainHistory train(Network<float>& net, const PatchSet& train_set, const TrainConfig& cfg,
                   const PatchSet* val_set = nullptr, const EpochObserver& observer = {});

}  // namespace petsr::nn
