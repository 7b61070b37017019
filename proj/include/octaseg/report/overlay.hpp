// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "octaseg/dataio/dataset.hpp"
#include "octaseg/objective/losses.hpp"

namespace octaseg {

/// One-pixel contour: foreground pixels with at least one 4-neighbor outside
/// the mask (frame edges count as outside).
template <typename T>
Tensor<T> boundary_4(const Tensor<T>& mask) {
  long H = mask.dim(2), W = mask.dim(3);
  Tensor<T> out = Tensor<T>::zeros(mask.shape());
  auto fg = [&](long i, long j) {
    if (i < 0 || i >= H || j < 0 || j >= W) return false;
    return mask.at(0, 0, i, j) != T(0);
  };
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j)
      if (fg(i, j) &&
          !(fg(i - 1, j) && fg(i + 1, j) && fg(i, j - 1) && fg(i, j + 1)))
        out.at(0, 0, i, j) = T(1);
  return out;
}

/// RGB diagnostic image: grayscale base with vessel prediction tinted red,
/// zone prediction tinted blue, and pure green / yellow one-pixel contours
/// for the vessel / zone ground truth. Empty predictions leave the base
/// untouched outside the contours.
template <typename T>
Tensor<T> render_overlay(const Tensor<T>& image, const Tensor<T>& rv_prob,
                         const Tensor<T>& faz_prob, const Tensor<T>& rv_gt,
                         const Tensor<T>& faz_gt) {
  require(image.shape() == rv_prob.shape() && image.shape() == faz_prob.shape() &&
              image.shape() == rv_gt.shape() && image.shape() == faz_gt.shape(),
          ErrorCode::ShapeMismatch, "overlay inputs must share one extent");
  long H = image.dim(2), W = image.dim(3);
  Tensor<T> rv_bin = binarize(rv_prob);
  Tensor<T> faz_bin = binarize(faz_prob);
  Tensor<T> rv_edge = boundary_4(rv_gt);
  Tensor<T> faz_edge = boundary_4(faz_gt);
  Tensor<T> out(Shape{1, 3, H, W});
  for (long i = 0; i < H * W; ++i) {
    double g = static_cast<double>(image[i]);
    double r = g, gg = g, b = g;
    if (rv_bin[i] != T(0)) r = 1.0;   // vessel prediction: red channel on
    if (faz_bin[i] != T(0)) b = 1.0;  // zone prediction: blue channel on
    if (rv_edge[i] != T(0)) {
      r = 0.0;
      gg = 1.0;
      b = 0.0;
    }
    if (faz_edge[i] != T(0)) {
      r = 1.0;
      gg = 1.0;
      b = 0.0;
    }
    out[i] = static_cast<T>(r);
    out[H * W + i] = static_cast<T>(gg);
    out[2 * H * W + i] = static_cast<T>(b);
  }
  return out;
}

/// Writes <id>_overlay.png, <id>_rv.png, <id>_faz.png into out_dir.
template <typename T>
void write_prediction_files(const std::string& out_dir, const OCTASample<T>& sample,
                            const Tensor<T>& rv_prob, const Tensor<T>& faz_prob) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_rgb((fs::path(out_dir) / (sample.id + "_overlay.png")).string(),
            render_overlay(sample.image, rv_prob, faz_prob, sample.rv, sample.faz));
  write_gray((fs::path(out_dir) / (sample.id + "_rv.png")).string(), rv_prob);
  write_gray((fs::path(out_dir) / (sample.id + "_faz.png")).string(), faz_prob);
}

}  // namespace octaseg
