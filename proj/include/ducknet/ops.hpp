#pragma once

#include <cmath>

#include "ducknet/tensor.hpp"

namespace ducknet {

enum class Activation { Relu, Sigmoid };

template <typename T>
Tensor4<T> activation_forward(const Tensor4<T>& x, Activation kind) {
  Tensor4<T> out(x.shape);
  const std::size_t n = x.data.size();
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < n; ++i)
      out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      out.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
  }
  return out;
}

// relu uses the saved input; sigmoid uses the saved output (y * (1 - y)).
template <typename T>
void activation_backward_acc(const Tensor4<T>& saved, Activation kind,
                             const Tensor4<T>& grad_out, Tensor4<T>& grad_in) {
  require_same_shape(saved, grad_out, "activation_backward");
  const std::size_t n = saved.data.size();
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < n; ++i)
      if (saved.data[i] > T(0)) grad_in.data[i] += grad_out.data[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const T y = saved.data[i];
      grad_in.data[i] += grad_out.data[i] * y * (T(1) - y);
    }
  }
}

// Elementwise sum; no broadcasting.
template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a, b, "add");
  Tensor4<T> out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = a.data[i] + b.data[i];
  return out;
}

// Each input cell is replicated into a 2x2 output block.
template <typename T>
Tensor4<T> upsample_nearest_2x(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape.n, x.shape.c, 2 * x.shape.h, 2 * x.shape.w);
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < x.shape.c; ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int h = 0; h < x.shape.h; ++h)
        for (int w = 0; w < x.shape.w; ++w) {
          const T v = src[h * x.shape.w + w];
          T* d = dst + (2 * h) * out.shape.w + 2 * w;
          d[0] = v;
          d[1] = v;
          d[out.shape.w] = v;
          d[out.shape.w + 1] = v;
        }
    }
  return out;
}

// Backward sums each 2x2 block of grad_out into the source cell.
template <typename T>
void upsample_nearest_2x_backward_acc(const Shape4& in_shape,
                                      const Tensor4<T>& grad_out,
                                      Tensor4<T>& grad_in) {
  require(grad_out.shape.h == 2 * in_shape.h &&
              grad_out.shape.w == 2 * in_shape.w &&
              grad_out.shape.n == in_shape.n && grad_out.shape.c == in_shape.c,
          "upsample_backward: grad_out shape mismatch");
  for (int n = 0; n < in_shape.n; ++n)
    for (int c = 0; c < in_shape.c; ++c) {
      const T* g = grad_out.plane(n, c);
      T* d = grad_in.plane(n, c);
      for (int h = 0; h < in_shape.h; ++h)
        for (int w = 0; w < in_shape.w; ++w) {
          const T* gb = g + (2 * h) * grad_out.shape.w + 2 * w;
          d[h * in_shape.w + w] +=
              ((gb[0] + gb[1]) + (gb[grad_out.shape.w] + gb[grad_out.shape.w + 1]));
        }
    }
}

}  // namespace ducknet
