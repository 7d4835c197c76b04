#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "petsr/nn/conv.hpp"
#include "petsr/nn/tensor.hpp"

namespace petsr::nn {

enum class Variant { S1, S2, S3, S4, V1, V2, V3, V4 };
enum class InputChannel { LrPet, HrMr, Radial, Axial };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);
std::string_view to_string(InputChannel c);
InputChannel input_channel_from_string(std::string_view s);

/// Declarative description of one network variant. Depth counts the branch
/// stage, the fusion layer and the output layer.
struct NetworkSpec {
  Variant variant = Variant::S1;
  int depth = 3;
  std::vector<InputChannel> inputs{InputChannel::LrPet};
  int filters = 64;
  int fusion_depth = 1;

  /// S* are 3 layers deep, V* 20; inputs follow the variant's channel set:
  /// 1 = LR PET, 2 = + HR MR, 3 = + radial + axial, 4 = + MR + radial + axial.
  static NetworkSpec for_variant(Variant v, int filters = 64);
  void validate() const;
  int receptive_field() const { return 2 * depth + 1; }
  bool uses(InputChannel c) const;
  bool operator==(const NetworkSpec&) const = default;
};

struct LayerInfo {
  std::string name;
  int in_ch = 0;
  int out_ch = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  bool relu = true;

  std::size_t weight_count() const { return static_cast<std::size_t>(in_ch) * out_ch * kTaps; }
};

template <class T>
struct SrOutput {
  Tensor<T> residual;
  Tensor<T> sr;
};

/// Branch-fusion residual CNN. Layer order (and parameter order): one 1->F
/// branch per input channel, the fusion layer (n_inputs*F -> F), the F->F
/// middle layers, and the F->1 output layer without activation.
template <class T>
class Network {
 public:
  Network() = default;
  explicit Network(const NetworkSpec& spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerInfo>& layers() const { return layers_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  int n_branches() const { return static_cast<int>(spec_.inputs.size()); }
  int conv_layer_count() const;
  int relu_count() const;

  ConvView<T> view(std::size_t layer) const;

  /// Network head output (the predicted residual).
  Tensor<T> forward(const Tensor<T>& inputs) const;
  /// sr = channel 0 of the input + residual.
  SrOutput<T> forward_sr(const Tensor<T>& inputs) const;

  /// Mean L1 between the predicted residual and `target_residual`; the
  /// parameter gradient is written to `grad`. Samples are processed in
  /// parallel and reduced in sample order.
  T loss_and_gradient(const Tensor<T>& inputs, const Tensor<T>& target_residual,
                      std::vector<T>& grad) const;

  /// One byte per hidden unit (1 where the ReLU passes), all samples
  /// concatenated. Used to detect kinks in finite-difference checks.
  std::vector<std::uint8_t> activation_pattern(const Tensor<T>& inputs) const;

  template <class U>
  Network<U> cast() const {
    Network<U> out(spec_);
    out.params().assign(params_.begin(), params_.end());
    return out;
  }

 private:
  struct Activations;
  void forward_sample(const T* in, int h, int w, Activations& act) const;
  void backward_sample(const T* in, int h, int w, const Activations& act, const T* gout,
                       T* grad) const;

  NetworkSpec spec_;
  std::vector<LayerInfo> layers_;
  std::vector<T> params_;
};

/// He-style normal initialization scaled by fan-in; the output layer is
/// zero-initialized unless `zero_head` is false, so an untrained network maps
/// LR to itself.
template <class T>
Network<T> build_network(const NetworkSpec& spec, std::uint64_t seed, bool zero_head = true);

template <class T>
SrOutput<T> forward_sr(const Network<T>& net, const Tensor<T>& inputs) {
  return net.forward_sr(inputs);
}

extern template class Network<float>;
extern template class Network<double>;

}  // namespace petsr::nn
