#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "ducknet/parallel.hpp"
#include "ducknet/tensor.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace ducknet {

enum class Padding { Same, None };

// kernel layout (out_channels, in_channels, kh, kw); bias (1, oc, 1, 1).
template <typename T>
struct ConvParams {
  Tensor4<T> kernel;
  Tensor4<T> bias;
  int stride_h = 1, stride_w = 1;
  int dilation_h = 1, dilation_w = 1;
  Padding padding = Padding::Same;
};

struct ConvGeom {
  int out_h = 0, out_w = 0;
  int pad_h = 0, pad_w = 0;  // top/left; bottom/right take any odd remainder
};

// Validates parameter/input compatibility and resolves the output geometry.
// Same padding requires an odd effective kernel per axis so the zero padding
// is symmetric; asymmetric cases are rejected rather than guessed.
template <typename T>
inline ConvGeom conv_geometry(const Shape4& in, const ConvParams<T>& p) {
  const Shape4& k = p.kernel.shape;
  require(p.stride_h >= 1 && p.stride_w >= 1, "conv2d: stride must be >= 1");
  require(p.dilation_h >= 1 && p.dilation_w >= 1,
          "conv2d: dilation must be >= 1");
  if (in.c != k.c)
    throw std::invalid_argument(
        "conv2d: channel axis mismatch: input has " + std::to_string(in.c) +
        " channels, kernel expects " + std::to_string(k.c));
  if (p.bias.shape.c != k.n)
    throw std::invalid_argument("conv2d: bias length " +
                                std::to_string(p.bias.shape.c) +
                                " != out_channels " + std::to_string(k.n));
  const int eff_h = p.dilation_h * (k.h - 1) + 1;
  const int eff_w = p.dilation_w * (k.w - 1) + 1;
  ConvGeom g;
  if (p.padding == Padding::Same) {
    if (eff_h % 2 == 0)
      throw std::invalid_argument(
          "conv2d: Same padding needs odd effective kernel on h axis, got " +
          std::to_string(eff_h));
    if (eff_w % 2 == 0)
      throw std::invalid_argument(
          "conv2d: Same padding needs odd effective kernel on w axis, got " +
          std::to_string(eff_w));
    g.pad_h = (eff_h - 1) / 2;
    g.pad_w = (eff_w - 1) / 2;
    g.out_h = (in.h + eff_h - 1 - eff_h) / p.stride_h + 1;
    g.out_w = (in.w + eff_w - 1 - eff_w) / p.stride_w + 1;
  } else {
    g.out_h = (in.h - eff_h) / p.stride_h + 1;
    g.out_w = (in.w - eff_w) / p.stride_w + 1;
    if (in.h < eff_h || g.out_h <= 0)
      throw std::invalid_argument("conv2d: zero-extent output on h axis (in " +
                                  std::to_string(in.h) + ", effective kernel " +
                                  std::to_string(eff_h) + ")");
    if (in.w < eff_w || g.out_w <= 0)
      throw std::invalid_argument("conv2d: zero-extent output on w axis (in " +
                                  std::to_string(in.w) + ", effective kernel " +
                                  std::to_string(eff_w) + ")");
  }
  return g;
}

namespace detail {

// Reference forward for one (n, oc) plane. Accumulation starts from the bias
// and adds taps in (ic, kr, kc) order, one fma per tap; out-of-image taps are
// skipped. The summation order is part of the operator contract.
template <typename T>
void conv_fwd_plane_ref(const Tensor4<T>& x, const ConvParams<T>& p,
                        const ConvGeom& g, int n, int oc, T* out) {
  const Shape4& ks = p.kernel.shape;
  const T bias = p.bias.data[std::size_t(oc)];
  for (int oh = 0; oh < g.out_h; ++oh) {
    for (int ow = 0; ow < g.out_w; ++ow) {
      T acc = bias;
      for (int ic = 0; ic < ks.c; ++ic) {
        const T* plane = x.plane(n, ic);
        const T* wk = p.kernel.plane(oc, ic);
        for (int kr = 0; kr < ks.h; ++kr) {
          const int ih = oh * p.stride_h + kr * p.dilation_h - g.pad_h;
          if (ih < 0 || ih >= x.shape.h) continue;
          for (int kc = 0; kc < ks.w; ++kc) {
            const int iw = ow * p.stride_w + kc * p.dilation_w - g.pad_w;
            if (iw < 0 || iw >= x.shape.w) continue;
            acc = std::fma(wk[kr * ks.w + kc], plane[ih * x.shape.w + iw], acc);
          }
        }
      }
      out[oh * g.out_w + ow] = acc;
    }
  }
}

// Reference input gradient for one (n, ic) plane, accumulating (+=).
// Per-element order (oc, kr, kc).
template <typename T>
void conv_gradin_plane_ref(const Tensor4<T>& gout, const ConvParams<T>& p,
                           const ConvGeom& g, const Shape4& in, int n, int ic,
                           T* gin) {
  const Shape4& ks = p.kernel.shape;
  for (int ih = 0; ih < in.h; ++ih) {
    for (int iw = 0; iw < in.w; ++iw) {
      T acc = T(0);
      for (int oc = 0; oc < ks.n; ++oc) {
        const T* gp = gout.plane(n, oc);
        const T* wk = p.kernel.plane(oc, ic);
        for (int kr = 0; kr < ks.h; ++kr) {
          const int num_h = ih + g.pad_h - kr * p.dilation_h;
          if (num_h < 0 || num_h % p.stride_h) continue;
          const int oh = num_h / p.stride_h;
          if (oh >= g.out_h) continue;
          for (int kc = 0; kc < ks.w; ++kc) {
            const int num_w = iw + g.pad_w - kc * p.dilation_w;
            if (num_w < 0 || num_w % p.stride_w) continue;
            const int ow = num_w / p.stride_w;
            if (ow >= g.out_w) continue;
            acc = std::fma(wk[kr * ks.w + kc], gp[oh * g.out_w + ow], acc);
          }
        }
      }
      gin[ih * in.w + iw] += acc;
    }
  }
}

// Reference kernel gradient for one (oc, ic) pair, accumulating.
// Per-element order (n, oh, ow).
template <typename T>
void conv_gradk_pair_ref(const Tensor4<T>& x, const Tensor4<T>& gout,
                         const ConvParams<T>& p, const ConvGeom& g, int oc,
                         int ic, T* gk) {
  const Shape4& ks = p.kernel.shape;
  for (int kr = 0; kr < ks.h; ++kr) {
    for (int kc = 0; kc < ks.w; ++kc) {
      T acc = T(0);
      for (int n = 0; n < x.shape.n; ++n) {
        const T* plane = x.plane(n, ic);
        const T* gp = gout.plane(n, oc);
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * p.stride_h + kr * p.dilation_h - g.pad_h;
          if (ih < 0 || ih >= x.shape.h) continue;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * p.stride_w + kc * p.dilation_w - g.pad_w;
            if (iw < 0 || iw >= x.shape.w) continue;
            acc = std::fma(gp[oh * g.out_w + ow], plane[ih * x.shape.w + iw],
                           acc);
          }
        }
      }
      gk[kr * ks.w + kc] += acc;
    }
  }
}

#if defined(__AVX512F__)

inline __mmask16 lane_mask(int lo, int hi) {  // lanes [lo, hi) of 0..16
  lo = std::max(lo, 0);
  hi = std::min(hi, 16);
  if (lo >= hi) return 0;
  return __mmask16(((1u << hi) - 1u) & ~((1u << lo) - 1u));
}

// Fast float forward, stride 1, blocked 4 output channels x 16 columns.
// Bit-identical to the reference path: same per-element tap order, fma
// arithmetic, out-of-image taps masked off.
inline void conv_fwd_stride1_f32(const Tensor4<float>& x,
                                 const ConvParams<float>& p, const ConvGeom& g,
                                 int n, int oc0, int oc_cnt, float* const* out) {
  const Shape4& ks = p.kernel.shape;
  const int W = x.shape.w, H = x.shape.h;
  const int KH = ks.h, KW = ks.w, DH = p.dilation_h, DW = p.dilation_w;
  int q = 0;
  for (; q + 4 <= oc_cnt; q += 4) {
    const float* wq[4];
    float bq[4];
    for (int j = 0; j < 4; ++j) {
      wq[j] = p.kernel.plane(oc0 + q + j, 0);
      bq[j] = p.bias.data[std::size_t(oc0 + q + j)];
    }
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow0 = 0; ow0 < g.out_w; ow0 += 16) {
        const __mmask16 outm = lane_mask(0, g.out_w - ow0);
        __m512 a0 = _mm512_set1_ps(bq[0]);
        __m512 a1 = _mm512_set1_ps(bq[1]);
        __m512 a2 = _mm512_set1_ps(bq[2]);
        __m512 a3 = _mm512_set1_ps(bq[3]);
        for (int ic = 0; ic < ks.c; ++ic) {
          const float* plane = x.plane(n, ic);
          const int wb = ic * KH * KW;
          for (int kr = 0; kr < KH; ++kr) {
            const int ih = oh + kr * DH - g.pad_h;
            if (ih < 0 || ih >= H) continue;
            const float* srow = plane + std::size_t(ih) * W;
            for (int kc = 0; kc < KW; ++kc) {
              const int off = kc * DW - g.pad_w;
              const __mmask16 m =
                  lane_mask(-(ow0 + off), W - (ow0 + off)) & outm;
              if (!m) continue;
              const __m512 xv = _mm512_maskz_loadu_ps(m, srow + ow0 + off);
              const int wi = wb + kr * KW + kc;
              a0 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(wq[0][wi]), xv, a0, m);
              a1 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(wq[1][wi]), xv, a1, m);
              a2 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(wq[2][wi]), xv, a2, m);
              a3 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(wq[3][wi]), xv, a3, m);
            }
          }
        }
        const std::size_t o = std::size_t(oh) * g.out_w + ow0;
        _mm512_mask_storeu_ps(out[q + 0] + o, outm, a0);
        _mm512_mask_storeu_ps(out[q + 1] + o, outm, a1);
        _mm512_mask_storeu_ps(out[q + 2] + o, outm, a2);
        _mm512_mask_storeu_ps(out[q + 3] + o, outm, a3);
      }
    }
  }
  for (; q < oc_cnt; ++q) {
    const float* wk = p.kernel.plane(oc0 + q, 0);
    const float bias = p.bias.data[std::size_t(oc0 + q)];
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow0 = 0; ow0 < g.out_w; ow0 += 16) {
        const __mmask16 outm = lane_mask(0, g.out_w - ow0);
        __m512 a0 = _mm512_set1_ps(bias);
        for (int ic = 0; ic < ks.c; ++ic) {
          const float* plane = x.plane(n, ic);
          const int wb = ic * KH * KW;
          for (int kr = 0; kr < KH; ++kr) {
            const int ih = oh + kr * DH - g.pad_h;
            if (ih < 0 || ih >= H) continue;
            const float* srow = plane + std::size_t(ih) * W;
            for (int kc = 0; kc < KW; ++kc) {
              const int off = kc * DW - g.pad_w;
              const __mmask16 m =
                  lane_mask(-(ow0 + off), W - (ow0 + off)) & outm;
              if (!m) continue;
              const __m512 xv = _mm512_maskz_loadu_ps(m, srow + ow0 + off);
              a0 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(wk[wb + kr * KW + kc]),
                                         xv, a0, m);
            }
          }
        }
        _mm512_mask_storeu_ps(out[q] + std::size_t(oh) * g.out_w + ow0, outm, a0);
      }
    }
  }
}

// Fast float input gradient, stride 1, blocked 4 input channels x 16 cols.
inline void conv_gradin_stride1_f32(const Tensor4<float>& gout,
                                    const ConvParams<float>& p,
                                    const ConvGeom& g, const Shape4& in, int n,
                                    int ic0, int ic_cnt, float* const* gin) {
  const Shape4& ks = p.kernel.shape;
  const int W = in.w, H = in.h;
  const int KH = ks.h, KW = ks.w, DH = p.dilation_h, DW = p.dilation_w;
  const int OW = g.out_w, OH = g.out_h;
  int q = 0;
  auto tail = [&](int qq) {
    for (int ih = 0; ih < H; ++ih) {
      for (int iw0 = 0; iw0 < W; iw0 += 16) {
        const __mmask16 inm = lane_mask(0, W - iw0);
        __m512 acc = _mm512_setzero_ps();
        for (int oc = 0; oc < ks.n; ++oc) {
          const float* gplane = gout.plane(n, oc);
          const float* wk = p.kernel.plane(oc, ic0 + qq);
          for (int kr = 0; kr < KH; ++kr) {
            const int oh = ih - (kr * DH - g.pad_h);
            if (oh < 0 || oh >= OH) continue;
            const float* grow = gplane + std::size_t(oh) * OW;
            for (int kc = 0; kc < KW; ++kc) {
              const int off = kc * DW - g.pad_w;  // ow = iw - off
              const __mmask16 m = lane_mask(off - iw0, OW + off - iw0) & inm;
              if (!m) continue;
              const __m512 gv = _mm512_maskz_loadu_ps(m, grow + iw0 - off);
              acc = _mm512_mask3_fmadd_ps(_mm512_set1_ps(wk[kr * KW + kc]), gv,
                                          acc, m);
            }
          }
        }
        float* base = gin[qq] + std::size_t(ih) * W + iw0;
        const __m512 prev = _mm512_maskz_loadu_ps(inm, base);
        _mm512_mask_storeu_ps(base, inm, _mm512_add_ps(prev, acc));
      }
    }
  };
  for (; q + 4 <= ic_cnt; q += 4) {
    for (int ih = 0; ih < H; ++ih) {
      for (int iw0 = 0; iw0 < W; iw0 += 16) {
        const __mmask16 inm = lane_mask(0, W - iw0);
        __m512 a0 = _mm512_setzero_ps();
        __m512 a1 = _mm512_setzero_ps();
        __m512 a2 = _mm512_setzero_ps();
        __m512 a3 = _mm512_setzero_ps();
        for (int oc = 0; oc < ks.n; ++oc) {
          const float* gplane = gout.plane(n, oc);
          const float* w0 = p.kernel.plane(oc, ic0 + q);
          const float* w1 = p.kernel.plane(oc, ic0 + q + 1);
          const float* w2 = p.kernel.plane(oc, ic0 + q + 2);
          const float* w3 = p.kernel.plane(oc, ic0 + q + 3);
          for (int kr = 0; kr < KH; ++kr) {
            const int oh = ih - (kr * DH - g.pad_h);
            if (oh < 0 || oh >= OH) continue;
            const float* grow = gplane + std::size_t(oh) * OW;
            for (int kc = 0; kc < KW; ++kc) {
              const int off = kc * DW - g.pad_w;
              const __mmask16 m = lane_mask(off - iw0, OW + off - iw0) & inm;
              if (!m) continue;
              const __m512 gv = _mm512_maskz_loadu_ps(m, grow + iw0 - off);
              const int wi = kr * KW + kc;
              a0 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(w0[wi]), gv, a0, m);
              a1 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(w1[wi]), gv, a1, m);
              a2 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(w2[wi]), gv, a2, m);
              a3 = _mm512_mask3_fmadd_ps(_mm512_set1_ps(w3[wi]), gv, a3, m);
            }
          }
        }
        const __m512 accs[4] = {a0, a1, a2, a3};
        for (int j = 0; j < 4; ++j) {
          float* base = gin[q + j] + std::size_t(ih) * W + iw0;
          const __m512 prev = _mm512_maskz_loadu_ps(inm, base);
          _mm512_mask_storeu_ps(base, inm, _mm512_add_ps(prev, accs[j]));
        }
      }
    }
  }
  for (; q < ic_cnt; ++q) tail(q);
}

// Fast float kernel gradient, stride 1: all taps of one (oc, ic) pair are
// accumulated in independent vector registers over a single plane sweep, then
// reduced. Needs KH*KW <= 16 (1x1, 3x3, 1x13, 13x1 all qualify).
inline void conv_gradk_stride1_f32(const Tensor4<float>& x,
                                   const Tensor4<float>& gout,
                                   const ConvParams<float>& p,
                                   const ConvGeom& g, int oc, int ic,
                                   float* gk) {
  const Shape4& ks = p.kernel.shape;
  const int W = x.shape.w, H = x.shape.h;
  const int KH = ks.h, KW = ks.w, DH = p.dilation_h, DW = p.dilation_w;
  const int T = KH * KW;
  __m512 acc[16];
  for (int t = 0; t < T; ++t) acc[t] = _mm512_setzero_ps();
  for (int n = 0; n < x.shape.n; ++n) {
    const float* gplane = gout.plane(n, oc);
    const float* xplane = x.plane(n, ic);
    for (int oh = 0; oh < g.out_h; ++oh) {
      const float* grow = gplane + std::size_t(oh) * g.out_w;
      for (int ow0 = 0; ow0 < g.out_w; ow0 += 16) {
        const __mmask16 outm = lane_mask(0, g.out_w - ow0);
        const __m512 gv = _mm512_maskz_loadu_ps(outm, grow + ow0);
        for (int kr = 0; kr < KH; ++kr) {
          const int ih = oh + kr * DH - g.pad_h;
          if (ih < 0 || ih >= H) continue;
          const float* xrow = xplane + std::size_t(ih) * W;
          for (int kc = 0; kc < KW; ++kc) {
            const int off = kc * DW - g.pad_w;
            const __mmask16 m = lane_mask(-(ow0 + off), W - (ow0 + off)) & outm;
            if (!m) continue;
            const __m512 xv = _mm512_maskz_loadu_ps(m, xrow + ow0 + off);
            acc[kr * KW + kc] =
                _mm512_mask3_fmadd_ps(gv, xv, acc[kr * KW + kc], m);
          }
        }
      }
    }
  }
  for (int t = 0; t < T; ++t) gk[t] += _mm512_reduce_add_ps(acc[t]);
}

#endif  // __AVX512F__

template <typename T>
constexpr bool kHasFastConv = false;
#if defined(__AVX512F__)
template <>
inline constexpr bool kHasFastConv<float> = true;
#endif

}  // namespace detail

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvParams<T>& p) {
  const ConvGeom g = conv_geometry(x.shape, p);
  const int oc_total = p.kernel.shape.n;
  Tensor4<T> out(x.shape.n, oc_total, g.out_h, g.out_w);
  const bool fast = detail::kHasFastConv<T> && p.stride_h == 1 && p.stride_w == 1;
  parallel_for(x.shape.n, [&](std::int64_t n) {
#if defined(__AVX512F__)
    if constexpr (std::is_same_v<T, float>) {
      if (fast) {
        std::vector<float*> outs(std::size_t(oc_total));
        for (int oc = 0; oc < oc_total; ++oc) outs[oc] = out.plane(int(n), oc);
        detail::conv_fwd_stride1_f32(x, p, g, int(n), 0, oc_total, outs.data());
        return;
      }
    }
#endif
    (void)fast;
    for (int oc = 0; oc < oc_total; ++oc)
      detail::conv_fwd_plane_ref(x, p, g, int(n), oc, out.plane(int(n), oc));
  });
  return out;
}

// Accumulating backward: adds into the provided gradient buffers (callers
// zero them when starting a fresh pass). Any of the outputs may be null.
// grad_kernel/grad_bias are raw arrays sized like p.kernel / p.bias.
template <typename T>
void conv2d_backward_acc(const Tensor4<T>& x, const ConvParams<T>& p,
                         const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                         T* grad_kernel, T* grad_bias) {
  const ConvGeom g = conv_geometry(x.shape, p);
  if (grad_out.shape.n != x.shape.n || grad_out.shape.c != p.kernel.shape.n ||
      grad_out.shape.h != g.out_h || grad_out.shape.w != g.out_w)
    throw std::invalid_argument("conv2d_backward: grad_out shape " +
                                grad_out.shape.str() + " does not match " +
                                Shape4{x.shape.n, p.kernel.shape.n, g.out_h,
                                       g.out_w}
                                    .str());
  const bool fast = detail::kHasFastConv<T> && p.stride_h == 1 && p.stride_w == 1;
  (void)fast;

  if (grad_in) {
    require(grad_in->shape == x.shape, "conv2d_backward: grad_in shape");
    parallel_for(x.shape.n, [&](std::int64_t n) {
#if defined(__AVX512F__)
      if constexpr (std::is_same_v<T, float>) {
        if (fast) {
          std::vector<float*> gins(std::size_t(x.shape.c));
          for (int ic = 0; ic < x.shape.c; ++ic)
            gins[ic] = grad_in->plane(int(n), ic);
          detail::conv_gradin_stride1_f32(grad_out, p, g, x.shape, int(n), 0,
                                          x.shape.c, gins.data());
          return;
        }
      }
#endif
      for (int ic = 0; ic < x.shape.c; ++ic)
        detail::conv_gradin_plane_ref(grad_out, p, g, x.shape, int(n), ic,
                                      grad_in->plane(int(n), ic));
    });
  }

  if (grad_kernel) {
    const int oc_total = p.kernel.shape.n, ic_total = p.kernel.shape.c;
    const int taps = p.kernel.shape.h * p.kernel.shape.w;
    parallel_for(std::int64_t(oc_total) * ic_total, [&](std::int64_t u) {
      const int oc = int(u / ic_total), ic = int(u % ic_total);
      T* gk = grad_kernel + (std::size_t(oc) * ic_total + ic) * taps;
#if defined(__AVX512F__)
      if constexpr (std::is_same_v<T, float>) {
        if (fast && taps <= 16) {
          detail::conv_gradk_stride1_f32(x, grad_out, p, g, oc, ic, gk);
          return;
        }
      }
#endif
      (void)taps;
      detail::conv_gradk_pair_ref(x, grad_out, p, g, oc, ic, gk);
    });
  }

  if (grad_bias) {
    // grad_bias[oc] = sum of grad_out over batch and spatial dims
    parallel_for(p.kernel.shape.n, [&](std::int64_t oc) {
      double acc = 0.0;
      for (int n = 0; n < grad_out.shape.n; ++n) {
        const T* gp = grad_out.plane(n, int(oc));
        const std::size_t cnt =
            std::size_t(grad_out.shape.h) * grad_out.shape.w;
        for (std::size_t i = 0; i < cnt; ++i) acc += double(gp[i]);
      }
      grad_bias[oc] += T(acc);
    });
  }
}

template <typename T>
struct ConvGrads {
  Tensor4<T> input, kernel, bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                             const Tensor4<T>& grad_out) {
  ConvGrads<T> grads{Tensor4<T>(x.shape), Tensor4<T>(p.kernel.shape),
                     Tensor4<T>(p.bias.shape)};
  conv2d_backward_acc(x, p, grad_out, &grads.input, grads.kernel.data.data(),
                      grads.bias.data.data());
  return grads;
}

}  // namespace ducknet
