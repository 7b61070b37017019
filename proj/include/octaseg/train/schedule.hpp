// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "octaseg/core/config.hpp"

namespace octaseg {

/// Learning rate at a fractional position through the run: linear ramp
/// lr_init -> lr_max over the warmup epochs, cosine decay lr_max -> lr_min
/// over the rest. Continuous at the junction; both pieces are evaluated at
/// per-step resolution.
inline double lr_at(double run_fraction, const TrainConfig& tc) {
  double wf = static_cast<double>(tc.warmup_epochs) / static_cast<double>(tc.epochs);
  if (run_fraction <= wf) {
    if (wf == 0.0) return tc.lr_max;
    return tc.lr_init + (tc.lr_max - tc.lr_init) * (run_fraction / wf);
  }
  double theta = (run_fraction - wf) / (1.0 - wf);
  if (theta > 1.0) theta = 1.0;
  return tc.lr_min + (tc.lr_max - tc.lr_min) * 0.5 * (1.0 + std::cos(M_PI * theta));
}

}  // namespace octaseg
