#include "petsr/nn/network.hpp"

#include <cmath>
#include <random>

#include "petsr/error.hpp"

namespace petsr::nn {

std::string_view to_string(Variant v) {
  static constexpr std::string_view names[] = {"S1", "S2", "S3", "S4", "V1", "V2", "V3", "V4"};
  return names[static_cast<int>(v)];
}

Variant variant_from_string(std::string_view s) {
  for (int i = 0; i < 8; ++i)
    if (to_string(Variant(i)) == s) return Variant(i);
  fail(ErrorKind::InvalidArgument, "unknown network variant '" + std::string(s) + "'");
}

std::string_view to_string(InputChannel c) {
  switch (c) {
    case InputChannel::LrPet: return "lr_pet";
    case InputChannel::HrMr: return "hr_mr";
    case InputChannel::Radial: return "radial";
    case InputChannel::Axial: return "axial";
  }
  return "unknown";
}

InputChannel input_channel_from_string(std::string_view s) {
  for (auto c : {InputChannel::LrPet, InputChannel::HrMr, InputChannel::Radial, InputChannel::Axial})
    if (to_string(c) == s) return c;
  fail(ErrorKind::Format, "unknown input channel '" + std::string(s) + "'");
}

namespace {

std::vector<InputChannel> table_inputs(Variant v) {
  using enum InputChannel;
  switch (v) {
    case Variant::S1:
    case Variant::V1: return {LrPet};
    case Variant::S2:
    case Variant::V2: return {LrPet, HrMr};
    case Variant::S3:
    case Variant::V3: return {LrPet, Radial, Axial};
    case Variant::S4:
    case Variant::V4: return {LrPet, HrMr, Radial, Axial};
  }
  return {LrPet};
}

int table_depth(Variant v) { return static_cast<int>(v) < 4 ? 3 : 20; }

}  // namespace

NetworkSpec NetworkSpec::for_variant(Variant v, int filters) {
  NetworkSpec s;
  s.variant = v;
  s.depth = table_depth(v);
  s.inputs = table_inputs(v);
  s.filters = filters;
  s.fusion_depth = 1;
  return s;
}

void NetworkSpec::validate() const {
  require(depth == table_depth(variant), ErrorKind::InvalidArgument,
          std::string(to_string(variant)) + " must have depth " +
              std::to_string(table_depth(variant)));
  require(inputs == table_inputs(variant), ErrorKind::InvalidArgument,
          std::string("input channels do not match variant ") + std::string(to_string(variant)));
  require(filters >= 1, ErrorKind::InvalidArgument, "filters must be >= 1");
  require(fusion_depth == 1, ErrorKind::InvalidArgument, "only fusion depth 1 is supported");
}

bool NetworkSpec::uses(InputChannel c) const {
  for (auto i : inputs)
    if (i == c) return true;
  return false;
}

// ---------------------------------------------------------------------------

template <class T>
struct Network<T>::Activations {
  // trunk[0]: concatenated branch outputs; trunk[t]: output of trunk layer t.
  std::vector<std::vector<T>> trunk;
  std::vector<T> residual;
  std::vector<T> cols;
};

template <class T>
Network<T>::Network(const NetworkSpec& spec) : spec_(spec) {
  spec_.validate();
  const int F = spec_.filters;
  std::size_t offset = 0;
  auto add = [&](std::string name, int in, int out, bool relu) {
    LayerInfo info{std::move(name), in, out, offset, 0, relu};
    offset += info.weight_count();
    info.bias_offset = offset;
    offset += static_cast<std::size_t>(out);
    layers_.push_back(std::move(info));
  };
  for (std::size_t b = 0; b < spec_.inputs.size(); ++b)
    add("branch_" + std::string(to_string(spec_.inputs[b])), 1, F, true);
  add("fusion", F * n_branches(), F, true);
  for (int m = 0; m < spec_.depth - 3; ++m) add("conv_" + std::to_string(m + 3), F, F, true);
  add("output", F, 1, false);
  params_.assign(offset, T(0));
}

template <class T>
int Network<T>::conv_layer_count() const {
  // The parallel branch convolutions form one layer of depth.
  return static_cast<int>(layers_.size()) - n_branches() + 1;
}

template <class T>
int Network<T>::relu_count() const {
  return conv_layer_count() - 1;
}

template <class T>
ConvView<T> Network<T>::view(std::size_t layer) const {
  const LayerInfo& l = layers_.at(layer);
  return {l.in_ch, l.out_ch, std::span<const T>(params_.data() + l.weight_offset, l.weight_count()),
          std::span<const T>(params_.data() + l.bias_offset, static_cast<std::size_t>(l.out_ch))};
}

namespace {

template <class T>
void relu_inplace(std::vector<T>& v) {
  for (T& x : v) x = x > T(0) ? x : T(0);
}

template <class T>
void relu_mask(const T* act, T* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(act[i] > T(0))) g[i] = T(0);
}

}  // namespace

template <class T>
void Network<T>::forward_sample(const T* in, int h, int w, Activations& act) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int F = spec_.filters;
  const int nb = n_branches();
  const int n_trunk = spec_.depth - 1;
  act.trunk.resize(n_trunk);
  act.trunk[0].resize(static_cast<std::size_t>(nb) * F * hw);
  for (int b = 0; b < nb; ++b)
    kernel::conv_forward(in + b * hw, h, w, view(b), act.trunk[0].data() + b * F * hw, act.cols);
  relu_inplace(act.trunk[0]);
  for (int t = 1; t < n_trunk; ++t) {
    act.trunk[t].resize(F * hw);
    kernel::conv_forward(act.trunk[t - 1].data(), h, w, view(nb + t - 1), act.trunk[t].data(),
                         act.cols);
    relu_inplace(act.trunk[t]);
  }
  act.residual.resize(hw);
  kernel::conv_forward(act.trunk.back().data(), h, w, view(layers_.size() - 1),
                       act.residual.data(), act.cols);
}

template <class T>
void Network<T>::backward_sample(const T* in, int h, int w, const Activations& act, const T* gout,
                                 T* grad) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int F = spec_.filters;
  const int nb = n_branches();
  const int n_trunk = spec_.depth - 1;
  std::vector<T> cols;
  std::vector<T> g(F * hw), g_prev;

  auto grads_of = [&](std::size_t layer) {
    const LayerInfo& l = layers_[layer];
    return std::pair<T*, T*>{grad + l.weight_offset, grad + l.bias_offset};
  };

  {
    auto [gw, gb] = grads_of(layers_.size() - 1);
    kernel::conv_backward(act.trunk.back().data(), h, w, view(layers_.size() - 1), gout, g.data(),
                          gw, gb, cols);
  }
  for (int t = n_trunk - 1; t >= 1; --t) {
    relu_mask(act.trunk[t].data(), g.data(), g.size());
    const std::size_t layer = nb + t - 1;
    g_prev.resize(static_cast<std::size_t>(layers_[layer].in_ch) * hw);
    auto [gw, gb] = grads_of(layer);
    kernel::conv_backward(act.trunk[t - 1].data(), h, w, view(layer), g.data(), g_prev.data(), gw,
                          gb, cols);
    std::swap(g, g_prev);
  }
  relu_mask(act.trunk[0].data(), g.data(), g.size());
  for (int b = 0; b < nb; ++b) {
    auto [gw, gb] = grads_of(b);
    kernel::conv_backward(in + b * hw, h, w, view(b), g.data() + b * F * hw,
                          static_cast<T*>(nullptr), gw, gb, cols);
  }
}

template <class T>
Tensor<T> Network<T>::forward(const Tensor<T>& inputs) const {
  require(inputs.c == n_branches(), ErrorKind::ShapeMismatch,
          "network expects " + std::to_string(n_branches()) + " input channels, got " +
              std::to_string(inputs.c));
  require(inputs.h >= 1 && inputs.w >= 1, ErrorKind::InvalidArgument, "empty input patch");
  Tensor<T> out(inputs.n, 1, inputs.h, inputs.w);
#pragma omp parallel
  {
    Activations act;
#pragma omp for schedule(static)
    for (int i = 0; i < inputs.n; ++i) {
      forward_sample(inputs.sample(i), inputs.h, inputs.w, act);
      std::copy(act.residual.begin(), act.residual.end(), out.sample(i));
    }
  }
  return out;
}

template <class T>
SrOutput<T> Network<T>::forward_sr(const Tensor<T>& inputs) const {
  SrOutput<T> r{forward(inputs), {}};
  r.sr = r.residual;
  const std::size_t hw = inputs.plane();
  for (int i = 0; i < inputs.n; ++i) {
    const T* lr = inputs.sample(i);
    T* sr = r.sr.sample(i);
    for (std::size_t k = 0; k < hw; ++k) sr[k] = lr[k] + sr[k];
  }
  return r;
}

template <class T>
T Network<T>::loss_and_gradient(const Tensor<T>& inputs, const Tensor<T>& target_residual,
                                std::vector<T>& grad) const {
  require(inputs.c == n_branches(), ErrorKind::ShapeMismatch, "input channel count mismatch");
  require(target_residual.n == inputs.n && target_residual.c == 1 &&
              target_residual.h == inputs.h && target_residual.w == inputs.w,
          ErrorKind::ShapeMismatch, "target residual does not match the inputs");
  const std::size_t P = params_.size();
  const std::size_t hw = inputs.plane();
  const double total = static_cast<double>(inputs.n) * static_cast<double>(hw);
  const T inv_n = static_cast<T>(1.0 / total);
  std::vector<T> per_sample(P * inputs.n, T(0));
  std::vector<double> losses(inputs.n, 0.0);

#pragma omp parallel
  {
    Activations act;
    std::vector<T> gout(hw);
#pragma omp for schedule(static)
    for (int i = 0; i < inputs.n; ++i) {
      forward_sample(inputs.sample(i), inputs.h, inputs.w, act);
      const T* tgt = target_residual.sample(i);
      double l = 0.0;
      for (std::size_t k = 0; k < hw; ++k) {
        const T d = act.residual[k] - tgt[k];
        l += std::abs(static_cast<double>(d));
        gout[k] = d > T(0) ? inv_n : d < T(0) ? -inv_n : T(0);
      }
      losses[i] = l;
      backward_sample(inputs.sample(i), inputs.h, inputs.w, act, gout.data(),
                      per_sample.data() + i * P);
    }
  }

  grad.assign(P, T(0));
  double loss = 0.0;
  for (int i = 0; i < inputs.n; ++i) {
    loss += losses[i];
    const T* g = per_sample.data() + i * P;
    for (std::size_t k = 0; k < P; ++k) grad[k] += g[k];
  }
  return static_cast<T>(loss / total);
}

template <class T>
std::vector<std::uint8_t> Network<T>::activation_pattern(const Tensor<T>& inputs) const {
  require(inputs.c == n_branches(), ErrorKind::ShapeMismatch, "input channel count mismatch");
  std::vector<std::uint8_t> out;
  Activations act;
  for (int i = 0; i < inputs.n; ++i) {
    forward_sample(inputs.sample(i), inputs.h, inputs.w, act);
    for (const auto& t : act.trunk)
      for (T v : t) out.push_back(v > T(0) ? 1 : 0);
  }
  return out;
}

template <class T>
Network<T> build_network(const NetworkSpec& spec, std::uint64_t seed, bool zero_head) {
  Network<T> net(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& p = net.params();
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerInfo& info = layers[l];
    const bool head = l + 1 == layers.size();
    const double scale = std::sqrt(2.0 / (info.in_ch * kTaps));
    for (std::size_t k = 0; k < info.weight_count(); ++k) {
      const double draw = normal(rng);
      p[info.weight_offset + k] = head && zero_head ? T(0) : static_cast<T>(scale * draw);
    }
  }
  return net;
}

template class Network<float>;
template class Network<double>;
template Network<float> build_network<float>(const NetworkSpec&, std::uint64_t, bool);
template Network<double> build_network<double>(const NetworkSpec&, std::uint64_t, bool);

}  // namespace petsr::nn
