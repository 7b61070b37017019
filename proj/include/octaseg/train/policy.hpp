// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "octaseg/core/config.hpp"
#include "octaseg/train/checkpoint.hpp"

namespace octaseg {

/// Deferred-evaluation checkpoint selection: validation starts at
/// ceil(eval_start_fraction * epochs); each eval epoch may update three
/// best-kind records (vessel Dice, zone Dice, their mean) on strict
/// improvement, ties keeping the earlier epoch, and every Nth eval-phase
/// epoch is additionally flagged for a periodic snapshot.
class CheckpointPolicy {
 public:
  CheckpointPolicy(long epochs, double eval_start_fraction, long periodic_every)
      : epochs_(epochs),
        first_eval_(static_cast<long>(
            std::ceil(eval_start_fraction * static_cast<double>(epochs)))),
        periodic_every_(periodic_every) {}

  long first_eval_epoch() const { return first_eval_; }
  bool should_eval(long epoch) const { return epoch >= first_eval_ && epoch < epochs_; }

  struct Update {
    bool best_rv = false, best_faz = false, best_avg = false, periodic = false;
  };

  Update observe(long epoch, double rv_dice, double faz_dice) {
    Update u;
    if (!should_eval(epoch)) return u;
    double avg = 0.5 * (rv_dice + faz_dice);
    if (best_rv_.epoch < 0 || rv_dice > best_rv_.rv_dice) {
      best_rv_ = {"best_rv", epoch, rv_dice, faz_dice, ""};
      u.best_rv = true;
    }
    if (best_faz_.epoch < 0 || faz_dice > best_faz_.faz_dice) {
      best_faz_ = {"best_faz", epoch, rv_dice, faz_dice, ""};
      u.best_faz = true;
    }
    double best_avg_val = 0.5 * (best_avg_.rv_dice + best_avg_.faz_dice);
    if (best_avg_.epoch < 0 || avg > best_avg_val) {
      best_avg_ = {"best_avg", epoch, rv_dice, faz_dice, ""};
      u.best_avg = true;
    }
    if ((epoch - first_eval_) % periodic_every_ == 0) u.periodic = true;
    return u;
  }

  const CheckpointRecord& best_rv() const { return best_rv_; }
  const CheckpointRecord& best_faz() const { return best_faz_; }
  const CheckpointRecord& best_avg() const { return best_avg_; }

 private:
  long epochs_, first_eval_, periodic_every_;
  CheckpointRecord best_rv_, best_faz_, best_avg_;
};

}  // namespace octaseg
