#pragma once

#include <cmath>
#include <vector>

#include "ducknet/tensor.hpp"

namespace ducknet {

namespace detail {

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

inline double lanczos_kernel(double x, double a) {
  if (x <= -a || x >= a) return 0.0;
  return sinc(x) * sinc(x / a);
}

struct ResampleTap {
  int first = 0;                // first source index
  std::vector<double> weights;  // normalized to sum 1
};

// Per-output-pixel taps for one axis. Source coordinates use center
// alignment: s = (i + 0.5) * scale - 0.5. Taps outside the image are
// dropped and the remaining weights renormalized.
inline std::vector<ResampleTap> lanczos_taps(int src, int dst, double a) {
  std::vector<ResampleTap> taps(std::size_t(dst));
  const double scale = double(src) / double(dst);
  for (int i = 0; i < dst; ++i) {
    const double s = (i + 0.5) * scale - 0.5;
    int lo = int(std::ceil(s - a));
    int hi = int(std::floor(s + a));
    lo = std::max(lo, 0);
    hi = std::min(hi, src - 1);
    ResampleTap& t = taps[std::size_t(i)];
    t.first = lo;
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double w = lanczos_kernel(double(j) - s, a);
      t.weights.push_back(w);
      sum += w;
    }
    for (double& w : t.weights) w /= sum;
  }
  return taps;
}

}  // namespace detail

// Separable Lanczos resampling (kernel sinc(x) * sinc(x/a), a = 3 by
// default), weights normalized per output pixel; horizontal pass first.
template <typename T>
void lanczos_resize_plane(const T* src, int sh, int sw, T* dst, int th, int tw,
                          double a = 3.0) {
  require(th >= 1 && tw >= 1, "lanczos_resize: target dims must be >= 1");
  const auto col_taps = detail::lanczos_taps(sw, tw, a);
  const auto row_taps = detail::lanczos_taps(sh, th, a);
  std::vector<double> mid(std::size_t(sh) * tw);
  for (int y = 0; y < sh; ++y) {
    const T* srow = src + std::size_t(y) * sw;
    double* mrow = mid.data() + std::size_t(y) * tw;
    for (int x = 0; x < tw; ++x) {
      const auto& t = col_taps[std::size_t(x)];
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k)
        acc += t.weights[k] * double(srow[t.first + int(k)]);
      mrow[x] = acc;
    }
  }
  for (int y = 0; y < th; ++y) {
    const auto& t = row_taps[std::size_t(y)];
    T* drow = dst + std::size_t(y) * tw;
    for (int x = 0; x < tw; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k)
        acc += t.weights[k] * mid[std::size_t(t.first + int(k)) * tw + x];
      drow[x] = T(acc);
    }
  }
}

template <typename T>
void nearest_resize_plane(const T* src, int sh, int sw, T* dst, int th,
                          int tw) {
  require(th >= 1 && tw >= 1, "nearest_resize: target dims must be >= 1");
  const double sy = double(sh) / th, sx = double(sw) / tw;
  for (int y = 0; y < th; ++y) {
    int iy = int(std::floor((y + 0.5) * sy));
    iy = std::min(std::max(iy, 0), sh - 1);
    for (int x = 0; x < tw; ++x) {
      int ix = int(std::floor((x + 0.5) * sx));
      ix = std::min(std::max(ix, 0), sw - 1);
      dst[std::size_t(y) * tw + x] = src[std::size_t(iy) * sw + ix];
    }
  }
}

template <typename T>
Tensor4<T> lanczos_resize(const Tensor4<T>& img, int th, int tw,
                          double a = 3.0) {
  Tensor4<T> out(img.shape.n, img.shape.c, th, tw);
  for (int n = 0; n < img.shape.n; ++n)
    for (int c = 0; c < img.shape.c; ++c)
      lanczos_resize_plane(img.plane(n, c), img.shape.h, img.shape.w,
                           out.plane(n, c), th, tw, a);
  return out;
}

template <typename T>
Tensor4<T> nearest_resize(const Tensor4<T>& img, int th, int tw) {
  Tensor4<T> out(img.shape.n, img.shape.c, th, tw);
  for (int n = 0; n < img.shape.n; ++n)
    for (int c = 0; c < img.shape.c; ++c)
      nearest_resize_plane(img.plane(n, c), img.shape.h, img.shape.w,
                           out.plane(n, c), th, tw);
  return out;
}

}  // namespace ducknet
