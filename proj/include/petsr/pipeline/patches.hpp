#pragma once

#include "petsr/nn/network.hpp"
#include "petsr/nn/train.hpp"
#include "petsr/pipeline/study.hpp"

namespace petsr::pipeline {

/// PET is multiplied by pet_scale (LR and HR alike); MR is mapped to
/// [0, 1] by (mr - mr_offset) * mr_scale.
struct NormRecord {
  double pet_scale = 1.0;
  double mr_offset = 0.0;
  double mr_scale = 1.0;
};

struct NormalizedCase {
  SubjectCase data;
  NormRecord norm;
  /// LR PET in original units; inference adds the rescaled residual to it so
  /// a zero residual returns the input bit for bit.
  ImageGrid input_pet;
};

/// pet_scale = 1 / max(LR). The true PET, when present, is left untouched.
NormalizedCase normalize_case(const SubjectCase& c);
ImageGrid denormalize_pet(const ImageGrid& pet, const NormRecord& norm);

/// Largest distance from the slice center to a pixel center (mm).
double max_radius_mm(const ImageGrid& grid);

/// Full-slice network input (1, channels, ny, nx) for slice z of a
/// normalized case, channels in `spec` order.
nn::Tensor<float> assemble_slice(const SubjectCase& c, const nn::NetworkSpec& spec, int z);

/// Patch origins along one axis of length n: 0, stride, ... and a last patch
/// flush with the border.
std::vector<int> patch_origins(int n, int patch, int stride);

/// Patches over every slice of a normalized case. The patch center used for
/// metadata is the pixel (y0 + P/2, x0 + P/2).
nn::PatchSet extract_patches(const SubjectCase& c, const nn::NetworkSpec& spec, int patch_size,
                             int stride);

/// Whole-volume inference on a normalized case; returns the SR volume in the
/// original PET units, sr = lr + residual / pet_scale.
ImageGrid infer(const nn::Network<float>& net, const NormalizedCase& c);

}  // namespace petsr::pipeline
