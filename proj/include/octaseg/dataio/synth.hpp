// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include "octaseg/core/rng.hpp"
#include "octaseg/dataio/dataset.hpp"

namespace octaseg {

// Synthetic angiography-like samples: a branching bright vessel tree radiating
// around a dark central avascular ellipse, rendered with smoothing and sensor
// noise. Fully deterministic given (seed, index), so regenerating any subset
// reproduces identical bytes.

namespace synth_detail {

template <typename T>
void stamp_disk(Tensor<T>& mask, double cy, double cx, double radius) {
  long H = mask.dim(2), W = mask.dim(3);
  long r = static_cast<long>(std::ceil(radius));
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) {
      long y = static_cast<long>(std::lround(cy)) + dy;
      long x = static_cast<long>(std::lround(cx)) + dx;
      if (y < 0 || y >= H || x < 0 || x >= W) continue;
      if (dy * dy + dx * dx <= radius * radius) mask.at(0, 0, y, x) = T(1);
    }
}

template <typename T>
Tensor<T> box_blur(const Tensor<T>& src) {  // separable [1,2,1]/4 in each axis
  long H = src.dim(2), W = src.dim(3);
  Tensor<T> tmp(src.shape()), out(src.shape());
  auto clampd = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j)
      tmp.at(0, 0, i, j) =
          static_cast<T>(0.25 * (src.at(0, 0, i, clampd(j - 1, W)) +
                                 2.0 * src.at(0, 0, i, j) + src.at(0, 0, i, clampd(j + 1, W))));
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j)
      out.at(0, 0, i, j) =
          static_cast<T>(0.25 * (tmp.at(0, 0, clampd(i - 1, H), j) +
                                 2.0 * tmp.at(0, 0, i, j) + tmp.at(0, 0, clampd(i + 1, H), j)));
  return out;
}

struct Walker {
  double y, x, heading;
  double width;
  int depth;
};

}  // namespace synth_detail

template <typename T>
OCTASample<T> synth_sample(long h, long w, std::uint64_t seed, long index) {
  Rng rng = Rng::derive(seed, "synth", static_cast<std::uint64_t>(index));
  double m = static_cast<double>(std::min(h, w));
  OCTASample<T> s;
  s.id = std::to_string(index);
  while (s.id.size() < 3) s.id = "0" + s.id;

  // central avascular ellipse; axes drawn so the discrete area stays well
  // inside [0.005, 0.08] of the frame
  double cy = h / 2.0 + rng.uniform(-0.03, 0.03) * m;
  double cx = w / 2.0 + rng.uniform(-0.03, 0.03) * m;
  double a = rng.uniform(m / 10.0, m / 6.0);
  double b_hi = std::min(m / 6.0, 0.07 * h * w / (M_PI * a));
  double b = rng.uniform(m / 10.0, b_hi);
  s.faz = Tensor<T>::zeros(Shape{1, 1, h, w});
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      double dy = (i - cy) / a, dx = (j - cx) / b;
      if (dy * dy + dx * dx <= 1.0) s.faz.at(0, 0, i, j) = T(1);
    }

  // branching random-walk vessel tree radiating outward from a ring around
  // the ellipse
  s.rv = Tensor<T>::zeros(Shape{1, 1, h, w});
  std::deque<synth_detail::Walker> queue;
  long trunks = rng.uniform_int(6, 9);
  double ring = 1.15 * std::max(a, b);
  for (long t = 0; t < trunks; ++t) {
    double ang = rng.uniform(0.0, 2.0 * M_PI);
    synth_detail::Walker wk;
    wk.y = cy + ring * std::sin(ang);
    wk.x = cx + ring * std::cos(ang);
    wk.heading = ang + rng.uniform(-0.3, 0.3);
    wk.width = static_cast<double>(rng.uniform_int(2, 4));
    wk.depth = 0;
    queue.push_back(wk);
  }
  long spawned = trunks;
  long max_steps = 2 * (h + w);
  while (!queue.empty()) {
    synth_detail::Walker wk = queue.front();
    queue.pop_front();
    for (long step = 0; step < max_steps; ++step) {
      if (wk.y < -2 || wk.y >= h + 2 || wk.x < -2 || wk.x >= w + 2) break;
      synth_detail::stamp_disk(s.rv, wk.y, wk.x, wk.width / 2.0);
      wk.heading += rng.normal(0.0, 0.12);
      wk.y += std::sin(wk.heading);
      wk.x += std::cos(wk.heading);
      if (wk.depth < 3 && spawned < 48 && rng.bernoulli(0.025)) {
        synth_detail::Walker child = wk;
        child.heading += (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.4, 0.9);
        child.width = std::max(1.0, wk.width - 1.0);
        child.depth = wk.depth + 1;
        queue.push_back(child);
        ++spawned;
      }
    }
  }

  // the avascular zone wins every overlap
  for (long i = 0; i < s.rv.numel(); ++i)
    if (s.faz[i] != T(0)) s.rv[i] = T(0);

  // render: bright vessels, dark zone, speckled background, smoothed + noise
  Tensor<T> img(Shape{1, 1, h, w});
  for (long i = 0; i < img.numel(); ++i) {
    double base = 0.25 + 0.15 * rng.uniform(0.0, 1.0);
    if (s.rv[i] != T(0))
      base = 0.9;
    else if (s.faz[i] != T(0))
      base = 0.05;
    img[i] = static_cast<T>(base);
  }
  img = synth_detail::box_blur(img);
  img = synth_detail::box_blur(img);
  for (long i = 0; i < img.numel(); ++i) {
    double v = static_cast<double>(img[i]) + rng.normal(0.0, 0.03);
    img[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
  }
  s.image = std::move(img);
  return s;
}

template <typename T>
std::vector<OCTASample<T>> synth_generate(long n, long h, long w, std::uint64_t seed) {
  std::vector<OCTASample<T>> out;
  out.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) out.push_back(synth_sample<T>(h, w, seed, i));
  return out;
}

/// Writes n samples plus split manifests into the standard layout. With fewer
/// than 3 samples every split lists all ids; otherwise roughly 70/15/15.
template <typename T>
void write_synth_dataset(const std::string& root, const std::string& field, long n, long h,
                         long w, std::uint64_t seed) {
  ensure_layout(root, field);
  std::vector<std::string> ids;
  for (const OCTASample<T>& s : synth_generate<T>(n, h, w, seed)) {
    save_sample(root, field, s);
    ids.push_back(s.id);
  }
  namespace fs = std::filesystem;
  fs::path splits = fs::path(root) / field / "splits";
  auto write_ids = [&](const std::string& name, long lo, long hi) {
    std::ofstream out((splits / (name + ".txt")).string());
    for (long i = lo; i < hi; ++i) out << ids[static_cast<size_t>(i)] << "\n";
  };
  if (n < 3) {
    write_ids("train", 0, n);
    write_ids("val", 0, n);
    write_ids("test", 0, n);
    return;
  }
  long n_val = std::max(1L, n * 15 / 100);
  long n_test = std::max(1L, n * 15 / 100);
  long n_train = n - n_val - n_test;
  write_ids("train", 0, n_train);
  write_ids("val", n_train, n_train + n_val);
  write_ids("test", n_train + n_val, n);
}

}  // namespace octaseg
