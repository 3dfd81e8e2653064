#pragma once

#include <algorithm>
#include <cmath>

#include "ducknet/dataset.hpp"
#include "ducknet/rng.hpp"

namespace ducknet {

// Sampling ranges for the augmentation pipeline. Brightness/scale are
// sampled from [lo, hi]; contrast/saturation are blend factors sampled from
// [1-x, 1+x]; hue is a fraction of a full turn sampled from [-x, +x]. The
// shear range is asymmetric on purpose.
struct AugmentConfig {
  double flip_h_prob = 0.5, flip_v_prob = 0.5;
  double brightness_lo = 0.6, brightness_hi = 1.6;
  double contrast = 0.2;
  double saturation = 0.1;
  double hue = 0.01;
  double rotation_deg = 180.0;     // sampled from [-x, +x]
  double translate_frac = 0.125;   // of each dimension, [-x, +x]
  double scale_lo = 0.5, scale_hi = 1.5;
  double shear_lo_deg = -22.5, shear_hi_deg = 22.0;
};

struct AugmentDraw {
  bool flip_h = false, flip_v = false;
  double brightness = 1.0;
  double contrast_f = 1.0;    // blend factor toward the per-image gray mean
  double saturation_f = 1.0;  // blend factor toward per-pixel luma
  double hue_delta = 0.0;     // fraction of a full turn
  double rotation_deg = 0.0;
  double tx = 0.0, ty = 0.0;  // fractions of width/height
  double scale = 1.0;
  double shear_deg = 0.0;
};

// Fixed draw order: flips, jitter factors, affine parameters.
inline AugmentDraw draw_augment(const AugmentConfig& cfg, Rng& rng) {
  AugmentDraw d;
  d.flip_h = rng.bernoulli(cfg.flip_h_prob);
  d.flip_v = rng.bernoulli(cfg.flip_v_prob);
  d.brightness = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
  d.contrast_f = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  d.saturation_f = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation);
  d.hue_delta = rng.uniform(-cfg.hue, cfg.hue);
  d.rotation_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  d.tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac);
  d.ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac);
  d.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  d.shear_deg = rng.uniform(cfg.shear_lo_deg, cfg.shear_hi_deg);
  return d;
}

enum class Interp { Bilinear, Nearest };

// Inverse-mapping affine warp of one plane. The forward map is
// translate . rotate . shear . scale, all about the image center; each
// output pixel samples the inverse-mapped source location, 0 outside.
template <typename T>
void affine_transform_plane(const T* src, int h, int w, T* dst,
                            double rotation_deg, double tx_frac, double ty_frac,
                            double scale, double shear_deg, Interp interp) {
  const double th = rotation_deg * M_PI / 180.0;
  const double ph = shear_deg * M_PI / 180.0;
  const double ct = std::cos(th), st = std::sin(th), sh = std::tan(ph);
  // A = R * Sh * S,  columns act on (x, y)
  const double a11 = scale * ct, a12 = scale * (ct * sh - st);
  const double a21 = scale * st, a22 = scale * (st * sh + ct);
  const double det = a11 * a22 - a12 * a21;
  require(std::abs(det) > 1e-12, "affine: singular transform");
  const double i11 = a22 / det, i12 = -a12 / det;
  const double i21 = -a21 / det, i22 = a11 / det;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double tx = tx_frac * w, ty = ty_frac * h;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx - tx, dy = y - cy - ty;
      const double sx = i11 * dx + i12 * dy + cx;
      const double sy = i21 * dx + i22 * dy + cy;
      double v = 0.0;
      if (interp == Interp::Nearest) {
        const int ix = int(std::floor(sx + 0.5));
        const int iy = int(std::floor(sy + 0.5));
        if (ix >= 0 && ix < w && iy >= 0 && iy < h)
          v = double(src[std::size_t(iy) * w + ix]);
      } else {
        const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        auto pick = [&](int yy, int xx) -> double {
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
          return double(src[std::size_t(yy) * w + xx]);
        };
        v = (1 - fy) * ((1 - fx) * pick(y0, x0) + fx * pick(y0, x0 + 1)) +
            fy * ((1 - fx) * pick(y0 + 1, x0) + fx * pick(y0 + 1, x0 + 1));
      }
      dst[std::size_t(y) * w + x] = T(v);
    }
  }
}

template <typename T>
void flip_plane_h(T* p, int h, int w) {
  for (int y = 0; y < h; ++y) {
    T* row = p + std::size_t(y) * w;
    std::reverse(row, row + w);
  }
}

template <typename T>
void flip_plane_v(T* p, int h, int w) {
  for (int y = 0; y < h / 2; ++y)
    std::swap_ranges(p + std::size_t(y) * w, p + std::size_t(y + 1) * w,
                     p + std::size_t(h - 1 - y) * w);
}

namespace detail {

inline double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

// rotate hue by delta turns; s/v preserved
inline void rotate_hue(double& r, double& g, double& b, double delta) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double c = mx - mn, v = mx;
  if (c == 0.0) return;  // gray, hue undefined
  double h;
  if (mx == r) h = std::fmod((g - b) / c, 6.0);
  else if (mx == g) h = (b - r) / c + 2.0;
  else h = (r - g) / c + 4.0;
  h /= 6.0;
  h += delta;
  h -= std::floor(h);
  const double s = v == 0.0 ? 0.0 : c / v;
  const double hh = h * 6.0;
  const int i = int(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace detail

// In-place color jitter on a (1,3,h,w) image in [0,1]. Order: brightness
// (multiply), contrast (blend toward the per-image gray mean), saturation
// (blend toward per-pixel luma), hue (rotate), then clamp to [0,1].
inline void color_jitter(Tensor4<float>& img, double brightness,
                         double contrast_f, double saturation_f,
                         double hue_delta) {
  require(img.shape.c == 3, "color_jitter: expects a 3-channel image");
  const std::size_t plane = std::size_t(img.shape.h) * img.shape.w;
  float* r = img.plane(0, 0);
  float* g = img.plane(0, 1);
  float* b = img.plane(0, 2);
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i)
    mean += detail::luma(r[i], g[i], b[i]);
  mean = brightness * mean / double(plane);  // gray mean after brightness
  for (std::size_t i = 0; i < plane; ++i) {
    double pr = double(r[i]) * brightness;
    double pg = double(g[i]) * brightness;
    double pb = double(b[i]) * brightness;
    pr = (1.0 - contrast_f) * mean + contrast_f * pr;
    pg = (1.0 - contrast_f) * mean + contrast_f * pg;
    pb = (1.0 - contrast_f) * mean + contrast_f * pb;
    const double l = detail::luma(pr, pg, pb);
    pr = (1.0 - saturation_f) * l + saturation_f * pr;
    pg = (1.0 - saturation_f) * l + saturation_f * pg;
    pb = (1.0 - saturation_f) * l + saturation_f * pb;
    if (hue_delta != 0.0) detail::rotate_hue(pr, pg, pb, hue_delta);
    r[i] = float(std::clamp(pr, 0.0, 1.0));
    g[i] = float(std::clamp(pg, 0.0, 1.0));
    b[i] = float(std::clamp(pb, 0.0, 1.0));
  }
}

// Applies a draw: flips and the composed affine go to both image and mask
// (bilinear / nearest), color jitter to the image only; the mask is
// re-binarized after resampling.
inline Sample apply_augment(const Sample& s, const AugmentDraw& d) {
  Sample out = s;
  const int h = s.image.shape.h, w = s.image.shape.w;
  for (int c = 0; c < 3; ++c) {
    if (d.flip_h) flip_plane_h(out.image.plane(0, c), h, w);
    if (d.flip_v) flip_plane_v(out.image.plane(0, c), h, w);
  }
  if (d.flip_h) flip_plane_h(out.mask.plane(0, 0), h, w);
  if (d.flip_v) flip_plane_v(out.mask.plane(0, 0), h, w);

  const bool identity_affine = d.rotation_deg == 0.0 && d.tx == 0.0 &&
                               d.ty == 0.0 && d.scale == 1.0 &&
                               d.shear_deg == 0.0;
  if (!identity_affine) {
    Tensor4<float> src = out.image;
    for (int c = 0; c < 3; ++c)
      affine_transform_plane(src.plane(0, c), h, w, out.image.plane(0, c),
                             d.rotation_deg, d.tx, d.ty, d.scale, d.shear_deg,
                             Interp::Bilinear);
    Tensor4<float> msrc = out.mask;
    affine_transform_plane(msrc.plane(0, 0), h, w, out.mask.plane(0, 0),
                           d.rotation_deg, d.tx, d.ty, d.scale, d.shear_deg,
                           Interp::Nearest);
    for (auto& v : out.mask.data) v = v >= 0.5f ? 1.0f : 0.0f;
  }
  color_jitter(out.image, d.brightness, d.contrast_f, d.saturation_f,
               d.hue_delta);
  return out;
}

inline Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  return apply_augment(s, draw_augment(cfg, rng));
}

}  // namespace ducknet
