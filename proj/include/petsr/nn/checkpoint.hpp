#pragma once

#include <cstdint>
#include <filesystem>

#include "petsr/nn/network.hpp"

namespace petsr::nn {

struct Checkpoint {
  Network<float> net;
  std::uint64_t seed = 0;
  int epoch = 0;
};

/// Writes `<base>.json` (spec, layer shapes, byte offsets, seed, epoch) and
/// `<base>.bin` (little-endian float32 parameters in layer order).
void save_checkpoint(const std::filesystem::path& base, const Network<float>& net,
                     std::uint64_t seed, int epoch);
/// Accepts the base path or the .json manifest path.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace petsr::nn
