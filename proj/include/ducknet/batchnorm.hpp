#pragma once

#include <cmath>
#include <vector>

#include "ducknet/tensor.hpp"

namespace ducknet {

enum class Mode { Train, Infer };

// Per-channel batch normalization state. gamma/beta are the trainable
// parameters; running statistics are updated in Train mode only
// (running <- momentum * running + (1 - momentum) * batch_stat, biased
// variance). Channel statistics are accumulated in double.
template <typename T>
struct BatchNormState {
  Tensor4<T> gamma, beta;              // (1, c, 1, 1)
  Tensor4<T> running_mean, running_var;
  T momentum = T(0.99);
  T epsilon = T(1e-5);

  // saved batch statistics from the last Train-mode forward
  std::vector<T> saved_mean, saved_invstd;

  explicit BatchNormState(int channels)
      : gamma(1, channels, 1, 1),
        beta(1, channels, 1, 1),
        running_mean(1, channels, 1, 1),
        running_var(1, channels, 1, 1) {
    for (auto& v : gamma.data) v = T(1);
    for (auto& v : running_var.data) v = T(1);
  }
  BatchNormState() = default;

  int channels() const { return gamma.shape.c; }
};

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, BatchNormState<T>& s,
                             Mode mode) {
  if (x.shape.c != s.channels())
    throw std::invalid_argument(
        "batchnorm: channel mismatch: input has " + std::to_string(x.shape.c) +
        ", state has " + std::to_string(s.channels()));
  Tensor4<T> out(x.shape);
  const std::int64_t m = std::int64_t(x.shape.n) * x.shape.h * x.shape.w;
  const std::size_t plane_sz = std::size_t(x.shape.h) * x.shape.w;
  if (mode == Mode::Train) {
    s.saved_mean.assign(std::size_t(x.shape.c), T(0));
    s.saved_invstd.assign(std::size_t(x.shape.c), T(0));
  }
  for (int c = 0; c < x.shape.c; ++c) {
    T mean, invstd;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (int n = 0; n < x.shape.n; ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane_sz; ++i) sum += double(p[i]);
      }
      const double mu = sum / double(m);
      double sq = 0.0;
      for (int n = 0; n < x.shape.n; ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane_sz; ++i) {
          const double d = double(p[i]) - mu;
          sq += d * d;
        }
      }
      const double var = sq / double(m);
      mean = T(mu);
      invstd = T(1.0 / std::sqrt(var + double(s.epsilon)));
      s.saved_mean[std::size_t(c)] = mean;
      s.saved_invstd[std::size_t(c)] = invstd;
      s.running_mean.data[std::size_t(c)] =
          s.momentum * s.running_mean.data[std::size_t(c)] +
          (T(1) - s.momentum) * mean;
      s.running_var.data[std::size_t(c)] =
          s.momentum * s.running_var.data[std::size_t(c)] +
          (T(1) - s.momentum) * T(var);
    } else {
      mean = s.running_mean.data[std::size_t(c)];
      invstd = T(1) / std::sqrt(s.running_var.data[std::size_t(c)] + s.epsilon);
    }
    const T gamma = s.gamma.data[std::size_t(c)];
    const T beta = s.beta.data[std::size_t(c)];
    const T scale = gamma * invstd;
    for (int n = 0; n < x.shape.n; ++n) {
      const T* p = x.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane_sz; ++i)
        o[i] = scale * (p[i] - mean) + beta;
    }
  }
  return out;
}

// Train-mode (batch statistics) backward. Uses the statistics saved by the
// preceding forward call. grad_gamma/grad_beta are raw per-channel arrays.
template <typename T>
void batchnorm_backward_acc(const Tensor4<T>& x, const BatchNormState<T>& s,
                            const Tensor4<T>& grad_out, Tensor4<T>& grad_in,
                            T* grad_gamma, T* grad_beta) {
  require_same_shape(x, grad_out, "batchnorm_backward");
  require(s.saved_mean.size() == std::size_t(x.shape.c),
          "batchnorm_backward: no saved batch statistics (run Train forward)");
  const std::int64_t m = std::int64_t(x.shape.n) * x.shape.h * x.shape.w;
  const std::size_t plane_sz = std::size_t(x.shape.h) * x.shape.w;
  for (int c = 0; c < x.shape.c; ++c) {
    const T mean = s.saved_mean[std::size_t(c)];
    const T invstd = s.saved_invstd[std::size_t(c)];
    const T gamma = s.gamma.data[std::size_t(c)];
    double sum_g = 0.0, sum_gx = 0.0;  // sum of g and of g * xhat
    for (int n = 0; n < x.shape.n; ++n) {
      const T* g = grad_out.plane(n, c);
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane_sz; ++i) {
        sum_g += double(g[i]);
        sum_gx += double(g[i]) * double((p[i] - mean) * invstd);
      }
    }
    grad_beta[c] += T(sum_g);
    grad_gamma[c] += T(sum_gx);
    const T k_g = T(sum_g / double(m));
    const T k_gx = T(sum_gx / double(m));
    const T scale = gamma * invstd;
    for (int n = 0; n < x.shape.n; ++n) {
      const T* g = grad_out.plane(n, c);
      const T* p = x.plane(n, c);
      T* d = grad_in.plane(n, c);
      for (std::size_t i = 0; i < plane_sz; ++i) {
        const T xhat = (p[i] - mean) * invstd;
        d[i] += scale * (g[i] - k_g - xhat * k_gx);
      }
    }
  }
}

}  // namespace ducknet
