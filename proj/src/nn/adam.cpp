#include "petsr/nn/adam.hpp"

#include <cmath>

#include "petsr/error.hpp"

namespace petsr::nn {

template <class T>
void AdamState<T>::validate() const {
  require(m.size() == v.size(), ErrorKind::ShapeMismatch, "Adam moment buffers differ in size");
  require(t >= 0, ErrorKind::InvalidArgument, "Adam step counter is negative");
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::InvalidArgument,
          "learning rate must be finite and >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::InvalidArgument,
          "Adam betas must lie in [0, 1)");
  require(eps > 0.0, ErrorKind::InvalidArgument, "Adam epsilon must be > 0");
}

template <class T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& s) {
  s.validate();
  require(params.size() == grads.size() && params.size() == s.m.size(), ErrorKind::ShapeMismatch,
          "adam_step: parameters, gradients and state differ in size");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  const T b1 = T(s.beta1), b2 = T(s.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    s.m[i] = b1 * s.m[i] + (T(1) - b1) * g;
    s.v[i] = b2 * s.v[i] + (T(1) - b2) * g * g;
    const double m_hat = static_cast<double>(s.m[i]) / c1;
    const double v_hat = static_cast<double>(s.v[i]) / c2;
    params[i] -= static_cast<T>(s.lr * m_hat / (std::sqrt(v_hat) + s.eps));
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<float>&, const std::vector<float>&, AdamState<float>&);
template void adam_step<double>(std::vector<double>&, const std::vector<double>&,
                                AdamState<double>&);

}  // namespace petsr::nn
