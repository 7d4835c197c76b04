#include "petsr/nn/conv.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "petsr/error.hpp"

namespace petsr::nn {

namespace kernel {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// cols[(c * 9 + ky * 3 + kx) * hw + y * w + x] = in[c][y + ky - 1][x + kx - 1]
template <class T>
void im2col(const T* in, int channels, int h, int w, T* cols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* src = in + c * hw;
    for (int ky = 0; ky < kKernel; ++ky)
      for (int kx = 0; kx < kKernel; ++kx) {
        T* dst = cols + (static_cast<std::size_t>(c) * kTaps + ky * kKernel + kx) * hw;
        const int dx = kx - 1;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* drow = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * w;
          std::fill(drow, drow + x_lo, T(0));
          std::copy(srow + x_lo + dx, srow + x_hi + dx, drow + x_lo);
          std::fill(drow + x_hi, drow + w, T(0));
        }
      }
  }
}

template <class T>
void col2im_add(const T* cols, int channels, int h, int w, T* out) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* dst = out + c * hw;
    for (int ky = 0; ky < kKernel; ++ky)
      for (int kx = 0; kx < kKernel; ++kx) {
        const T* src = cols + (static_cast<std::size_t>(c) * kTaps + ky * kKernel + kx) * hw;
        const int dx = kx - 1;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* srow = src + static_cast<std::size_t>(y) * w;
          T* drow = dst + static_cast<std::size_t>(sy) * w;
          for (int x = x_lo; x < x_hi; ++x) drow[x + dx] += srow[x];
        }
      }
  }
}

}  // namespace

template <class T>
void conv_forward(const T* in, int h, int w, const ConvView<T>& layer, T* out,
                  std::vector<T>& cols) {
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index k = static_cast<Eigen::Index>(layer.in_ch) * kTaps;
  cols.resize(static_cast<std::size_t>(k * hw));
  im2col(in, layer.in_ch, h, w, cols.data());
  Eigen::Map<const RowMat<T>> W(layer.weights.data(), layer.out_ch, k);
  Eigen::Map<const RowMat<T>> C(cols.data(), k, hw);
  Eigen::Map<RowMat<T>> O(out, layer.out_ch, hw);
  // Eigen switches to GEMV for a single output row, and its GEMV peels by
  // pointer alignment, so the summation order would depend on the heap.
  // Keep results bitwise reproducible with a fixed-order loop there.
  if (layer.out_ch == 1) {
    std::fill(out, out + hw, layer.bias[0]);
    for (Eigen::Index j = 0; j < k; ++j) {
      const T wj = layer.weights[j];
      const T* c = cols.data() + j * hw;
      for (Eigen::Index i = 0; i < hw; ++i) out[i] += wj * c[i];
    }
    return;
  }
  O.noalias() = W * C;
  for (int o = 0; o < layer.out_ch; ++o) O.row(o).array() += layer.bias[o];
}

template <class T>
void conv_backward(const T* in, int h, int w, const ConvView<T>& layer, const T* gout, T* gin,
                   T* gw, T* gb, std::vector<T>& cols) {
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index k = static_cast<Eigen::Index>(layer.in_ch) * kTaps;
  cols.resize(static_cast<std::size_t>(k * hw));
  im2col(in, layer.in_ch, h, w, cols.data());
  Eigen::Map<const RowMat<T>> W(layer.weights.data(), layer.out_ch, k);
  Eigen::Map<const RowMat<T>> G(gout, layer.out_ch, hw);
  {
    Eigen::Map<const RowMat<T>> C(cols.data(), k, hw);
    Eigen::Map<RowMat<T>> GW(gw, layer.out_ch, k);
    if (layer.out_ch == 1) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const T* c = cols.data() + j * hw;
        T acc = T(0);
        for (Eigen::Index i = 0; i < hw; ++i) acc += gout[i] * c[i];
        gw[j] += acc;
      }
    } else {
      GW.noalias() += G * C.transpose();
    }
  }
  for (int o = 0; o < layer.out_ch; ++o) {
    const T* g = gout + o * hw;
    T acc = T(0);
    for (Eigen::Index i = 0; i < hw; ++i) acc += g[i];
    gb[o] += acc;
  }
  if (gin != nullptr) {
    Eigen::Map<RowMat<T>> GC(cols.data(), k, hw);
    GC.noalias() = W.transpose() * G;
    std::fill(gin, gin + layer.in_ch * hw, T(0));
    col2im_add(cols.data(), layer.in_ch, h, w, gin);
  }
}

template void conv_forward<float>(const float*, int, int, const ConvView<float>&, float*,
                                  std::vector<float>&);
template void conv_forward<double>(const double*, int, int, const ConvView<double>&, double*,
                                   std::vector<double>&);
template void conv_backward<float>(const float*, int, int, const ConvView<float>&, const float*,
                                   float*, float*, float*, std::vector<float>&);
template void conv_backward<double>(const double*, int, int, const ConvView<double>&,
                                    const double*, double*, double*, double*,
                                    std::vector<double>&);

}  // namespace kernel

namespace {

template <class T>
void check_layer(const ConvView<T>& layer) {
  require(layer.in_ch >= 1 && layer.out_ch >= 1, ErrorKind::InvalidArgument,
          "convolution needs at least one input and output channel");
  require(layer.weights.size() == static_cast<std::size_t>(layer.in_ch) * layer.out_ch * kTaps &&
              layer.bias.size() == static_cast<std::size_t>(layer.out_ch),
          ErrorKind::ShapeMismatch, "convolution parameters do not match its channel counts");
}

}  // namespace

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvView<T>& layer) {
  check_layer(layer);
  require(input.c == layer.in_ch, ErrorKind::ShapeMismatch,
          "input has " + std::to_string(input.c) + " channels, layer expects " +
              std::to_string(layer.in_ch));
  Tensor<T> out(input.n, layer.out_ch, input.h, input.w);
#pragma omp parallel
  {
    std::vector<T> cols;
#pragma omp for schedule(static)
    for (int i = 0; i < input.n; ++i)
      kernel::conv_forward(input.sample(i), input.h, input.w, layer, out.sample(i), cols);
  }
  return out;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvView<T>& layer,
                             const Tensor<T>& grad_out, bool want_input) {
  check_layer(layer);
  require(input.c == layer.in_ch && grad_out.c == layer.out_ch && grad_out.n == input.n &&
              grad_out.h == input.h && grad_out.w == input.w,
          ErrorKind::ShapeMismatch, "conv2d_backward shapes are inconsistent");
  ConvGrads<T> g;
  if (want_input) g.input = Tensor<T>(input.n, input.c, input.h, input.w);
  const std::size_t nw = layer.weights.size();
  const std::size_t nb = layer.bias.size();
  // Per-sample parameter gradients, reduced in sample order afterwards.
  std::vector<T> gw_all(nw * input.n, T(0)), gb_all(nb * input.n, T(0));
#pragma omp parallel
  {
    std::vector<T> cols;
#pragma omp for schedule(static)
    for (int i = 0; i < input.n; ++i)
      kernel::conv_backward(input.sample(i), input.h, input.w, layer, grad_out.sample(i),
                            want_input ? g.input.sample(i) : nullptr, gw_all.data() + i * nw,
                            gb_all.data() + i * nb, cols);
  }
  g.weights.assign(nw, T(0));
  g.bias.assign(nb, T(0));
  for (int i = 0; i < input.n; ++i) {
    for (std::size_t k = 0; k < nw; ++k) g.weights[k] += gw_all[i * nw + k];
    for (std::size_t k = 0; k < nb; ++k) g.bias[k] += gb_all[i * nb + k];
  }
  return g;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = std::max(v, T(0));
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require(x.same_shape(grad_out), ErrorKind::ShapeMismatch, "relu_backward shapes differ");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x.data[i] > T(0))) g.data[i] = T(0);
  return g;
}

template <class T>
LossAndGrad<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.same_shape(target), ErrorKind::ShapeMismatch, "l1_loss shapes differ");
  require(pred.size() > 0, ErrorKind::InvalidArgument, "l1_loss of an empty tensor");
  LossAndGrad<T> r;
  r.grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  const T inv_n = T(1) / static_cast<T>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred.data[i] - target.data[i];
    sum += std::abs(static_cast<double>(d));
    r.grad.data[i] = d > T(0) ? inv_n : d < T(0) ? -inv_n : T(0);
  }
  r.loss = static_cast<T>(sum / static_cast<double>(pred.size()));
  return r;
}

#define PETSR_INSTANTIATE(T)                                                             \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const ConvView<T>&);            \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const ConvView<T>&,         \
                                           const Tensor<T>&, bool);                      \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                  \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);               \
  template LossAndGrad<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);

PETSR_INSTANTIATE(float)
PETSR_INSTANTIATE(double)
#undef PETSR_INSTANTIATE

}  // namespace petsr::nn
