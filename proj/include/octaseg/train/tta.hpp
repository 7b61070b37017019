// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "octaseg/dataio/augment.hpp"

namespace octaseg {

/// Flip-averaged inference: predict on {identity, mirrored-columns,
/// mirrored-rows} inputs, undo each mirror on the probability map, and
/// average in probability space. `forward` maps a (1,1,H,W) image to a
/// probability tensor of the same extent.
template <typename T, typename Fwd>
Tensor<T> tta_predict(Fwd&& forward, const Tensor<T>& image) {
  Tensor<T> p0 = forward(image);
  Tensor<T> p1 = flip_h_map(forward(flip_h_map(image)));
  Tensor<T> p2 = flip_v_map(forward(flip_v_map(image)));
  Tensor<T> out(p0.shape());
  for (long i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>((static_cast<double>(p0[i]) + static_cast<double>(p1[i]) +
                             static_cast<double>(p2[i])) /
                            3.0);
  return out;
}

/// Joint two-map variant: returns (vessel, zone) probability maps averaged
/// the same way with one forward pass per transform.
template <typename T, typename Fwd>
std::pair<Tensor<T>, Tensor<T>> tta_predict_joint(Fwd&& forward, const Tensor<T>& image) {
  auto [rv0, faz0] = forward(image);
  auto [rv1, faz1] = forward(flip_h_map(image));
  rv1 = flip_h_map(rv1);
  faz1 = flip_h_map(faz1);
  auto [rv2, faz2] = forward(flip_v_map(image));
  rv2 = flip_v_map(rv2);
  faz2 = flip_v_map(faz2);
  Tensor<T> rv(rv0.shape()), faz(faz0.shape());
  for (long i = 0; i < rv.numel(); ++i)
    rv[i] = static_cast<T>((static_cast<double>(rv0[i]) + static_cast<double>(rv1[i]) +
                            static_cast<double>(rv2[i])) /
                           3.0);
  for (long i = 0; i < faz.numel(); ++i)
    faz[i] = static_cast<T>((static_cast<double>(faz0[i]) + static_cast<double>(faz1[i]) +
                             static_cast<double>(faz2[i])) /
                            3.0);
  return {std::move(rv), std::move(faz)};
}

}  // namespace octaseg
