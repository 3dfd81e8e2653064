#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ducknet {

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  bool operator==(const Shape4&) const = default;
  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

// Dense 4-D array, layout (batch, channel, row, column), row-major.
// grad is empty until requested; when present it has the same length as data.
template <typename T>
struct Tensor4 {
  Shape4 shape;
  std::vector<T> data;
  std::vector<T> grad;

  Tensor4() = default;
  Tensor4(int n, int c, int h, int w) : shape{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("tensor: negative extent in " + shape.str());
    data.assign(std::size_t(shape.numel()), T(0));
  }
  explicit Tensor4(Shape4 s) : Tensor4(s.n, s.c, s.h, s.w) {}

  std::int64_t numel() const { return shape.numel(); }

  std::size_t idx(int n, int c, int h, int w) const {
    return ((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w;
  }
  T& at(int n, int c, int h, int w) { return data[idx(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data[idx(n, c, h, w)]; }

  T* plane(int n, int c) { return data.data() + idx(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data.data() + idx(n, c, 0, 0); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    grad.assign(data.size(), T(0));
  }
  T* gplane(int n, int c) { return grad.data() + idx(n, c, 0, 0); }
  const T* gplane(int n, int c) const { return grad.data() + idx(n, c, 0, 0); }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

template <typename T>
void require_same_shape(const Tensor4<T>& a, const Tensor4<T>& b,
                        const char* what) {
  if (!(a.shape == b.shape))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape.str() + " vs " + b.shape.str());
}

}  // namespace ducknet
