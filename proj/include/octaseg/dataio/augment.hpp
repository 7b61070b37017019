// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "octaseg/core/rng.hpp"
#include "octaseg/dataio/dataset.hpp"

namespace octaseg {

// Stochastic training-time augmentation. Each transform fires independently
// with probability `p`; geometric transforms share one parameter draw between
// the image and both masks (image sampled bilinearly, masks nearest so they
// stay binary). With p = 0 the sample passes through bit-for-bit.

struct AugmentationPolicy {
  double p = 0.2;
  double rotate_limit_deg = 15.0;
  double brightness_limit = 0.2;
  double contrast_limit = 0.2;
  double clahe_clip = 2.0;
  long clahe_tiles = 8;
  long warp_grid = 4;
  double warp_std_frac = 0.03;
};

enum class Interp { Nearest, Bilinear };

namespace aug_detail {

template <typename T>
T sample_at(const Tensor<T>& src, double y, double x, Interp interp) {
  long H = src.dim(2), W = src.dim(3);
  if (interp == Interp::Nearest) {
    long iy = static_cast<long>(std::lround(y));
    long ix = static_cast<long>(std::lround(x));
    if (iy < 0 || iy >= H || ix < 0 || ix >= W) return T(0);
    return src.at(0, 0, iy, ix);
  }
  long y0 = static_cast<long>(std::floor(y)), x0 = static_cast<long>(std::floor(x));
  double fy = y - y0, fx = x - x0;
  auto px = [&](long iy, long ix) -> double {
    if (iy < 0 || iy >= H || ix < 0 || ix >= W) return 0.0;
    return static_cast<double>(src.at(0, 0, iy, ix));
  };
  double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
             fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
  return static_cast<T>(v);
}

}  // namespace aug_detail

/// Rotation about the image center; target pixels pull from the source via
/// the inverse rotation, out-of-frame reads as 0.
template <typename T>
Tensor<T> rotate_map(const Tensor<T>& src, double degrees, Interp interp) {
  long H = src.dim(2), W = src.dim(3);
  double rad = degrees * M_PI / 180.0;
  double c = std::cos(rad), s = std::sin(rad);
  double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  Tensor<T> out(src.shape());
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j) {
      double dy = i - cy, dx = j - cx;
      double sy = cy + c * dy - s * dx;
      double sx = cx + s * dy + c * dx;
      out.at(0, 0, i, j) = aug_detail::sample_at(src, sy, sx, interp);
    }
  return out;
}

template <typename T>
Tensor<T> flip_h_map(const Tensor<T>& src) {  // mirror columns
  long H = src.dim(2), W = src.dim(3);
  Tensor<T> out(src.shape());
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j) out.at(0, 0, i, j) = src.at(0, 0, i, W - 1 - j);
  return out;
}

template <typename T>
Tensor<T> flip_v_map(const Tensor<T>& src) {  // mirror rows
  long H = src.dim(2), W = src.dim(3);
  Tensor<T> out(src.shape());
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j) out.at(0, 0, i, j) = src.at(0, 0, H - 1 - i, j);
  return out;
}

/// Coarse displacement grid, bilinearly upsampled to a dense backward warp.
struct WarpField {
  long grid = 4;
  std::vector<double> dy, dx;  // grid*grid node displacements in pixels
};

inline WarpField draw_warp_field(Rng& rng, long grid, double std_px) {
  WarpField f;
  f.grid = grid;
  f.dy.resize(static_cast<size_t>(grid * grid));
  f.dx.resize(static_cast<size_t>(grid * grid));
  for (auto& v : f.dy) v = rng.normal(0.0, std_px);
  for (auto& v : f.dx) v = rng.normal(0.0, std_px);
  return f;
}

template <typename T>
Tensor<T> piecewise_warp_map(const Tensor<T>& src, const WarpField& f, Interp interp) {
  long H = src.dim(2), W = src.dim(3), g = f.grid;
  auto node = [&](const std::vector<double>& d, long gy, long gx) {
    gy = std::clamp(gy, 0L, g - 1);
    gx = std::clamp(gx, 0L, g - 1);
    return d[static_cast<size_t>(gy * g + gx)];
  };
  Tensor<T> out(src.shape());
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j) {
      double gy = (g - 1) * static_cast<double>(i) / std::max(1L, H - 1);
      double gx = (g - 1) * static_cast<double>(j) / std::max(1L, W - 1);
      long y0 = static_cast<long>(std::floor(gy)), x0 = static_cast<long>(std::floor(gx));
      double fy = gy - y0, fx = gx - x0;
      auto lerp2 = [&](const std::vector<double>& d) {
        return (1 - fy) * ((1 - fx) * node(d, y0, x0) + fx * node(d, y0, x0 + 1)) +
               fy * ((1 - fx) * node(d, y0 + 1, x0) + fx * node(d, y0 + 1, x0 + 1));
      };
      out.at(0, 0, i, j) =
          aug_detail::sample_at(src, i + lerp2(f.dy), j + lerp2(f.dx), interp);
    }
  return out;
}

/// Contrast-limited adaptive histogram equalization on a [0,1] image.
template <typename T>
Tensor<T> clahe_map(const Tensor<T>& src, double clip_limit, long tiles) {
  long H = src.dim(2), W = src.dim(3);
  constexpr long BINS = 256;
  long ty = std::max(1L, std::min(tiles, H)), tx = std::max(1L, std::min(tiles, W));
  std::vector<double> lut(static_cast<size_t>(ty * tx * BINS));
  auto tile_bounds = [](long t, long n, long total, long& lo, long& hi) {
    lo = t * total / n;
    hi = (t + 1) * total / n;
  };
  std::vector<double> hist(static_cast<size_t>(BINS));
  for (long a = 0; a < ty; ++a)
    for (long b = 0; b < tx; ++b) {
      long r0, r1, c0, c1;
      tile_bounds(a, ty, H, r0, r1);
      tile_bounds(b, tx, W, c0, c1);
      std::fill(hist.begin(), hist.end(), 0.0);
      double count = static_cast<double>((r1 - r0) * (c1 - c0));
      for (long i = r0; i < r1; ++i)
        for (long j = c0; j < c1; ++j) {
          double v = std::clamp(static_cast<double>(src.at(0, 0, i, j)), 0.0, 1.0);
          long bin = std::min(BINS - 1, static_cast<long>(v * BINS));
          hist[static_cast<size_t>(bin)] += 1.0;
        }
      double ceiling = clip_limit * count / BINS;
      double excess = 0.0;
      for (auto& hv : hist)
        if (hv > ceiling) {
          excess += hv - ceiling;
          hv = ceiling;
        }
      for (auto& hv : hist) hv += excess / BINS;
      double acc = 0.0;
      double* tl = &lut[static_cast<size_t>((a * tx + b) * BINS)];
      for (long k = 0; k < BINS; ++k) {
        acc += hist[static_cast<size_t>(k)];
        tl[k] = acc / count;
      }
    }
  Tensor<T> out(src.shape());
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j) {
      double v = std::clamp(static_cast<double>(src.at(0, 0, i, j)), 0.0, 1.0);
      long bin = std::min(BINS - 1, static_cast<long>(v * BINS));
      // interpolate between the LUTs of the four surrounding tile centers
      double fy = (static_cast<double>(i) + 0.5) * ty / H - 0.5;
      double fx = (static_cast<double>(j) + 0.5) * tx / W - 0.5;
      long a0 = static_cast<long>(std::floor(fy)), b0 = static_cast<long>(std::floor(fx));
      double wy = fy - a0, wx = fx - b0;
      auto at_tile = [&](long a, long b) {
        a = std::clamp(a, 0L, ty - 1);
        b = std::clamp(b, 0L, tx - 1);
        return lut[static_cast<size_t>((a * tx + b) * BINS + bin)];
      };
      double v2 = (1 - wy) * ((1 - wx) * at_tile(a0, b0) + wx * at_tile(a0, b0 + 1)) +
                  wy * ((1 - wx) * at_tile(a0 + 1, b0) + wx * at_tile(a0 + 1, b0 + 1));
      out.at(0, 0, i, j) = static_cast<T>(v2);
    }
  return out;
}

template <typename T>
Tensor<T> brightness_contrast_map(const Tensor<T>& src, double brightness, double contrast) {
  Tensor<T> out(src.shape());
  for (long i = 0; i < src.numel(); ++i) {
    double v = static_cast<double>(src[i]) * (1.0 + contrast) + brightness;
    out[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

template <typename T>
OCTASample<T> augment(const OCTASample<T>& in, Rng& rng, const AugmentationPolicy& pol) {
  OCTASample<T> s = in;
  long H = s.image.dim(2), W = s.image.dim(3);
  if (rng.bernoulli(pol.p)) {
    double b = rng.uniform(-pol.brightness_limit, pol.brightness_limit);
    double c = rng.uniform(-pol.contrast_limit, pol.contrast_limit);
    s.image = brightness_contrast_map(s.image, b, c);
  }
  if (rng.bernoulli(pol.p)) s.image = clahe_map(s.image, pol.clahe_clip, pol.clahe_tiles);
  if (rng.bernoulli(pol.p)) {
    double deg = rng.uniform(-pol.rotate_limit_deg, pol.rotate_limit_deg);
    s.image = rotate_map(s.image, deg, Interp::Bilinear);
    s.rv = rotate_map(s.rv, deg, Interp::Nearest);
    s.faz = rotate_map(s.faz, deg, Interp::Nearest);
  }
  if (rng.bernoulli(pol.p)) {
    s.image = flip_h_map(s.image);
    s.rv = flip_h_map(s.rv);
    s.faz = flip_h_map(s.faz);
  }
  if (rng.bernoulli(pol.p)) {
    s.image = flip_v_map(s.image);
    s.rv = flip_v_map(s.rv);
    s.faz = flip_v_map(s.faz);
  }
  if (rng.bernoulli(pol.p)) {
    WarpField f = draw_warp_field(rng, pol.warp_grid,
                                  pol.warp_std_frac * static_cast<double>(std::min(H, W)));
    s.image = piecewise_warp_map(s.image, f, Interp::Bilinear);
    s.rv = piecewise_warp_map(s.rv, f, Interp::Nearest);
    s.faz = piecewise_warp_map(s.faz, f, Interp::Nearest);
  }
  return s;
}

}  // namespace octaseg
