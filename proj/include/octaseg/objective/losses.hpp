// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "octaseg/core/config.hpp"
#include "octaseg/core/ops.hpp"
#include "octaseg/objective/edt.hpp"

namespace octaseg {

// Segmentation losses. Every loss takes a probability map `p` (autodiff
// variable, values in [0,1]) and a binary target tensor `y` of the same
// shape, and returns a scalar variable. Distance maps derived from `y`, and
// from the binarized prediction in the Hausdorff term, enter as constants.

template <typename T>
Tensor<T> binarize(const Tensor<T>& p, T threshold = T(0.5)) {
  Tensor<T> out(p.shape());
  for (long i = 0; i < p.numel(); ++i) out[i] = p[i] > threshold ? T(1) : T(0);
  return out;
}

template <typename T>
Var<T> one_minus(const Var<T>& r) {
  return add_scalar(scale(r, T(-1)), T(1));
}

template <typename T>
Var<T> dice_loss(const Var<T>& p, const Tensor<T>& y, T eps = T(1e-6)) {
  Var<T> yv = Var<T>::leaf(y);
  Var<T> inter = sum_all(mul(p, yv));
  Var<T> num = add_scalar(scale(inter, T(2)), eps);
  Var<T> den = add_scalar(add(sum_all(p), sum_all(yv)), eps);
  return one_minus(div(num, den));
}

template <typename T>
Var<T> tversky_loss(const Var<T>& p, const Tensor<T>& y, T alpha = T(0.3),
                    T beta = T(0.7), T eps = T(1e-6)) {
  Tensor<T> y_inv(y.shape());
  for (long i = 0; i < y.numel(); ++i) y_inv[i] = T(1) - y[i];
  Var<T> yv = Var<T>::leaf(y);
  Var<T> yn = Var<T>::leaf(y_inv);
  Var<T> inter = sum_all(mul(p, yv));
  Var<T> fp = sum_all(mul(p, yn));
  Var<T> fn = sum_all(mul(one_minus(p), yv));
  Var<T> num = add_scalar(inter, eps);
  Var<T> den = add_scalar(add(inter, add(scale(fp, alpha), scale(fn, beta))), eps);
  return one_minus(div(num, den));
}

/// Mean of the probability map weighted by the signed distance to the target
/// boundary: mass inside the target pulls the value negative, mass outside
/// pushes it positive.
template <typename T>
Var<T> boundary_loss(const Var<T>& p, const Tensor<T>& y) {
  return mean_all(mul(p, Var<T>::leaf(signed_distance(y))));
}

/// Distance-weighted squared error. Both squared distance maps (to the
/// target, and to the thresholded prediction) are constants, so gradients
/// flow only through the (p - y)^2 factor.
template <typename T>
Var<T> hausdorff_loss(const Var<T>& p, const Tensor<T>& y) {
  Tensor<T> dt_y = edt_sq(y);
  Tensor<T> dt_p = edt_sq(binarize(p.value()));
  Tensor<T> w(y.shape());
  for (long i = 0; i < w.numel(); ++i) w[i] = dt_y[i] + dt_p[i];
  Var<T> diff = sub(p, Var<T>::leaf(y));
  return mean_all(mul(mul(diff, diff), Var<T>::leaf(w)));
}

template <typename T>
Var<T> rv_loss(const Var<T>& p, const Tensor<T>& y, const LossWeights& w) {
  Var<T> total = scale(dice_loss(p, y), static_cast<T>(w.rv_dice));
  total = add(total, scale(boundary_loss(p, y), static_cast<T>(w.rv_boundary)));
  total = add(total, scale(tversky_loss(p, y), static_cast<T>(w.rv_tversky)));
  total = add(total, scale(hausdorff_loss(p, y), static_cast<T>(w.rv_hausdorff)));
  return total;
}

template <typename T>
Var<T> faz_loss(const Var<T>& p, const Tensor<T>& y, const LossWeights& w) {
  Var<T> total = scale(dice_loss(p, y), static_cast<T>(w.faz_dice));
  total = add(total, scale(boundary_loss(p, y), static_cast<T>(w.faz_boundary)));
  return total;
}

template <typename T>
Var<T> total_loss(const Var<T>& rv_p, const Tensor<T>& rv_y, const Var<T>& faz_p,
                  const Tensor<T>& faz_y, const LossWeights& w) {
  return add(scale(rv_loss(rv_p, rv_y, w), static_cast<T>(w.lambda_rv)),
             scale(faz_loss(faz_p, faz_y, w), static_cast<T>(w.lambda_faz)));
}

}  // namespace octaseg
