#pragma once

#include <cstddef>
#include <vector>

namespace petsr::nn {

/// Batched NCHW array.
template <class T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * plane(); }
  std::size_t index(int in, int ic, int y, int x) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
  }
  T& at(int in, int ic, int y, int x) { return data[index(in, ic, y, x)]; }
  T at(int in, int ic, int y, int x) const { return data[index(in, ic, y, x)]; }
  T* sample(int in) { return data.data() + in * sample_size(); }
  const T* sample(int in) const { return data.data() + in * sample_size(); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  /// Throws on a size mismatch or a non-finite entry.
  void validate() const;
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.n = t.n;
  out.c = t.c;
  out.h = t.h;
  out.w = t.w;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace petsr::nn
