#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ducknet/tensor.hpp"

namespace ducknet {

// RMSprop, plain variant: no momentum, no centering.
//   sq_avg <- rho * sq_avg + (1 - rho) * g^2
//   param  <- param - lr * g / (sqrt(sq_avg) + eps)
template <typename T>
struct RmspropState {
  std::vector<T> sq_avg;
  T rho = T(0.9);
  T eps = T(1e-7);
  T lr = T(1e-4);

  explicit RmspropState(std::size_t n_params, T learning_rate = T(1e-4))
      : sq_avg(n_params, T(0)), lr(learning_rate) {}
  RmspropState() = default;
};

template <typename T>
void rmsprop_step(T* params, const T* grads, std::size_t n, RmspropState<T>& s,
                  std::size_t offset, const std::string& what) {
  require(offset + n <= s.sq_avg.size(), "rmsprop_step: state too small");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(double(grads[i])))
      throw std::runtime_error("rmsprop_step: non-finite gradient in " + what +
                               " at index " + std::to_string(i));
  T* sq = s.sq_avg.data() + offset;
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grads[i];
    sq[i] = s.rho * sq[i] + (T(1) - s.rho) * g * g;
    params[i] -= s.lr * g / (std::sqrt(sq[i]) + s.eps);
  }
}

template <typename T>
void rmsprop_step(std::vector<T>& params, const std::vector<T>& grads,
                  RmspropState<T>& s) {
  require(params.size() == grads.size() && params.size() == s.sq_avg.size(),
          "rmsprop_step: params/grads/state length mismatch");
  rmsprop_step(params.data(), grads.data(), params.size(), s, 0, "params");
}

}  // namespace ducknet
