#pragma once

#include <span>
#include <vector>

#include "petsr/nn/tensor.hpp"

namespace petsr::nn {

inline constexpr int kKernel = 3;
inline constexpr int kTaps = kKernel * kKernel;

/// Non-owning view of one 3x3 convolution: weights [out][in][3][3], bias [out].
template <class T>
struct ConvView {
  int in_ch = 0;
  int out_ch = 0;
  std::span<const T> weights;
  std::span<const T> bias;
};

template <class T>
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  ConvLayer() = default;
  ConvLayer(int in, int out)
      : in_ch(in), out_ch(out), weights(static_cast<std::size_t>(in) * out * kTaps), bias(out) {}

  T& weight(int o, int i, int ky, int kx) {
    return weights[((static_cast<std::size_t>(o) * in_ch + i) * kKernel + ky) * kKernel + kx];
  }
  ConvView<T> view() const { return {in_ch, out_ch, weights, bias}; }
};

template <class T>
struct ConvGrads {
  Tensor<T> input;
  std::vector<T> weights;
  std::vector<T> bias;
};

/// Stride 1, zero padding 1: z = w^T x + b at every pixel, spatial size kept.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvView<T>& layer);

/// Gradients of the forward map given dL/d(output). `want_input = false`
/// skips the input gradient (first layer).
template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvView<T>& layer,
                             const Tensor<T>& grad_out, bool want_input = true);

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// Passes gradient where x > 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <class T>
struct LossAndGrad {
  T loss = T(0);
  Tensor<T> grad;
};

/// Mean absolute error; gradient sign(pred - target) / n with sign(0) = 0.
template <class T>
LossAndGrad<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

namespace kernel {

/// Single-sample convolution on CHW buffers. `cols` is im2col scratch space.
template <class T>
void conv_forward(const T* in, int h, int w, const ConvView<T>& layer, T* out,
                  std::vector<T>& cols);

/// Accumulates weight/bias gradients into gw/gb and writes the input
/// gradient to `gin` (skipped when null).
template <class T>
void conv_backward(const T* in, int h, int w, const ConvView<T>& layer, const T* gout, T* gin,
                   T* gw, T* gb, std::vector<T>& cols);

}  // namespace kernel

}  // namespace petsr::nn
