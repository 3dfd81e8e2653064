#pragma once

#include <cmath>

#include "ducknet/rng.hpp"
#include "ducknet/tensor.hpp"

namespace ducknet {

// Fan-balanced uniform init on [-L, L], L = sqrt(6 / (fan_in + fan_out)).
// For a conv kernel (oc, ic, kh, kw): fan_in = ic*kh*kw, fan_out = oc*kh*kw.
template <typename T>
void init_weights(Tensor4<T>& kernel, Rng& rng) {
  const Shape4& s = kernel.shape;
  const double fan_in = double(s.c) * s.h * s.w;
  const double fan_out = double(s.n) * s.h * s.w;
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : kernel.data) v = T(rng.uniform(-limit, limit));
}

template <typename T>
double init_limit(const Shape4& s) {
  return std::sqrt(6.0 / (double(s.c) * s.h * s.w + double(s.n) * s.h * s.w));
}

}  // namespace ducknet
