#include "petsr/nn/tensor.hpp"

#include <cmath>

#include "petsr/error.hpp"

namespace petsr::nn {

template <class T>
void Tensor<T>::validate() const {
  require(n >= 0 && c >= 0 && h >= 0 && w >= 0, ErrorKind::InvalidArgument,
          "tensor dims must be non-negative");
  require(data.size() == static_cast<std::size_t>(n) * c * h * w, ErrorKind::ShapeMismatch,
          "tensor data length does not match its shape");
  for (T v : data) require(std::isfinite(v), ErrorKind::NonFinite, "tensor holds a non-finite value");
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace petsr::nn
