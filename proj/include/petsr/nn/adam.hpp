#pragma once

#include <cstdint>
#include <vector>

namespace petsr::nn {

template <class T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t t = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double learning_rate = 3e-4)
      : m(n, T(0)), v(n, T(0)), lr(learning_rate) {}
  void validate() const;
};

/// Bias-corrected Adam: p -= lr * m_hat / (sqrt(v_hat) + eps).
template <class T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& state);

}  // namespace petsr::nn
