// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "octaseg/core/error.hpp"
#include "octaseg/core/tensor.hpp"
#include "octaseg/objective/losses.hpp"

namespace octaseg {

// Evaluation metrics over binary masks. Overlap counts are integer
// accumulations; the two-empty-masks case scores a perfect 1.0 for both
// Dice and Jaccard.

struct OverlapCounts {
  long intersection = 0;
  long pred = 0;
  long target = 0;
};

template <typename T>
OverlapCounts overlap_counts(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.shape() == target.shape(), ErrorCode::ShapeMismatch,
          "overlap_counts " + pred.shape().str() + " vs " + target.shape().str());
  OverlapCounts c;
  for (long i = 0; i < pred.numel(); ++i) {
    bool a = pred[i] != T(0);
    bool b = target[i] != T(0);
    c.pred += a;
    c.target += b;
    c.intersection += a && b;
  }
  return c;
}

inline double dice_from_counts(const OverlapCounts& c) {
  if (c.pred == 0 && c.target == 0) return 1.0;
  return 2.0 * static_cast<double>(c.intersection) /
         static_cast<double>(c.pred + c.target);
}

inline double jaccard_from_counts(const OverlapCounts& c) {
  long uni = c.pred + c.target - c.intersection;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(uni);
}

template <typename T>
double dice_metric(const Tensor<T>& pred, const Tensor<T>& target) {
  return dice_from_counts(overlap_counts(pred, target));
}

template <typename T>
double jaccard_metric(const Tensor<T>& pred, const Tensor<T>& target) {
  return jaccard_from_counts(overlap_counts(pred, target));
}

/// Mean and population standard deviation of a batch of per-sample scores.
inline std::pair<double, double> aggregate(const std::vector<double>& scores) {
  require(!scores.empty(), ErrorCode::EmptySet, "aggregate of zero scores");
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  return {mean, std::sqrt(var)};
}

}  // namespace octaseg
