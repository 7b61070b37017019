// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "octaseg/core/tensor.hpp"

namespace octaseg {

// Exact Euclidean distance transforms via the two-pass separable
// lower-envelope-of-parabolas algorithm. Distances are measured to the
// nearest foreground (nonzero) pixel; a plane with no foreground gets the
// finite sentinel (H+W)^2, which exceeds any attainable squared distance.

namespace edt_detail {

template <typename T>
void transform_1d(std::vector<T>& f, std::vector<T>& d, std::vector<int>& v,
                  std::vector<T>& z, long n) {
  const T INF = std::numeric_limits<T>::max() / 4;
  int k = 0;
  v[0] = 0;
  z[0] = -INF;
  z[1] = INF;
  for (long q = 1; q < n; ++q) {
    T s;
    while (true) {
      long vk = v[static_cast<size_t>(k)];
      s = ((f[q] + T(q) * q) - (f[vk] + T(vk) * vk)) / (2 * (T(q) - vk));
      if (s > z[static_cast<size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<size_t>(k)] = static_cast<int>(q);
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = INF;
  }
  k = 0;
  for (long q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < T(q)) ++k;
    long vk = v[static_cast<size_t>(k)];
    d[static_cast<size_t>(q)] = (T(q) - vk) * (T(q) - vk) + f[static_cast<size_t>(vk)];
  }
}

}  // namespace edt_detail

/// Squared Euclidean distance to the nearest nonzero pixel, per trailing
/// (H,W) plane of any rank-4 tensor.
template <typename T>
Tensor<T> edt_sq(const Tensor<T>& mask) {
  long H = mask.dim(2), W = mask.dim(3);
  long planes = mask.numel() / (H * W);
  const T INF = std::numeric_limits<T>::max() / 4;
  T sentinel = static_cast<T>((H + W)) * static_cast<T>((H + W));
  Tensor<T> out(mask.shape());
  long n = std::max(H, W);
  std::vector<T> f(static_cast<size_t>(n)), dbuf(static_cast<size_t>(n)),
      z(static_cast<size_t>(n) + 1);
  std::vector<int> v(static_cast<size_t>(n));
  std::vector<T> col(static_cast<size_t>(H));
  for (long p = 0; p < planes; ++p) {
    const T* src = mask.data() + p * H * W;
    T* dst = out.data() + p * H * W;
    bool any = false;
    for (long i = 0; i < H * W; ++i)
      if (src[i] != T(0)) {
        any = true;
        break;
      }
    if (!any) {
      for (long i = 0; i < H * W; ++i) dst[i] = sentinel;
      continue;
    }
    // rows: distance along x
    for (long i = 0; i < H; ++i) {
      for (long j = 0; j < W; ++j) f[static_cast<size_t>(j)] = src[i * W + j] != T(0) ? T(0) : INF;
      edt_detail::transform_1d(f, dbuf, v, z, W);
      for (long j = 0; j < W; ++j) dst[i * W + j] = dbuf[static_cast<size_t>(j)];
    }
    // columns: combine with distance along y
    for (long j = 0; j < W; ++j) {
      for (long i = 0; i < H; ++i) col[static_cast<size_t>(i)] = dst[i * W + j];
      for (long i = 0; i < H; ++i) f[static_cast<size_t>(i)] = col[static_cast<size_t>(i)];
      edt_detail::transform_1d(f, dbuf, v, z, H);
      for (long i = 0; i < H; ++i) dst[i * W + j] = dbuf[static_cast<size_t>(i)];
    }
  }
  return out;
}

/// Euclidean distance to the nearest nonzero pixel.
template <typename T>
Tensor<T> edt(const Tensor<T>& mask) {
  Tensor<T> d = edt_sq(mask);
  for (long i = 0; i < d.numel(); ++i) d[i] = std::sqrt(d[i]);
  return d;
}

/// Signed distance map: negative inside the mask, positive outside, zero
/// nowhere except along the morphological boundary rows of each region (the
/// discrete construction dist-to-foreground minus dist-to-background).
template <typename T>
Tensor<T> signed_distance(const Tensor<T>& mask) {
  Tensor<T> inv(mask.shape());
  for (long i = 0; i < mask.numel(); ++i) inv[i] = mask[i] != T(0) ? T(0) : T(1);
  Tensor<T> d_fg = edt(mask);
  Tensor<T> d_bg = edt(inv);
  for (long i = 0; i < d_fg.numel(); ++i) d_fg[i] -= d_bg[i];
  return d_fg;
}

}  // namespace octaseg
