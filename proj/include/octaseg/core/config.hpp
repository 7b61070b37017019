// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "octaseg/core/error.hpp"

namespace octaseg {

enum class DsconvMode { Plain, Offset };

inline std::string to_string(DsconvMode m) {
  return m == DsconvMode::Plain ? "plain" : "offset";
}
inline DsconvMode dsconv_mode_from(const std::string& s) {
  if (s == "plain") return DsconvMode::Plain;
  if (s == "offset") return DsconvMode::Offset;
  fail(ErrorCode::ConfigError, "dsconv_mode must be plain or offset, got " + s);
}

/// Architecture knobs. Toggles mirror the ablation study columns.
struct ModelConfig {
  long in_channels = 1;
  long base_channels = 32;
  static constexpr long encoder_depth = 3;
  long ssm_state_dim = 16;
  double dropout_rate = 0.1;
  long roi_size = 224;
  static constexpr double residual_scale_cfeb = 0.3;
  bool hdfe = true;
  bool vmaf = true;
  bool cmbf = true;
  bool cfeb = true;
  bool roi = true;
  bool rv_prior = true;
  bool stop_rv_gradient = false;
  DsconvMode dsconv_mode = DsconvMode::Plain;
  std::uint64_t seed = 0;
};

inline ModelConfig validate_config(ModelConfig cfg, std::pair<long, long> dataset_hw) {
  if (cfg.roi && cfg.roi_size > std::min(dataset_hw.first, dataset_hw.second))
    fail(ErrorCode::RoiTooLarge,
         "roi_size " + std::to_string(cfg.roi_size) + " exceeds dataset min side " +
             std::to_string(std::min(dataset_hw.first, dataset_hw.second)));
  if (cfg.base_channels % 4 != 0)
    fail(ErrorCode::BadChannels, "base_channels " + std::to_string(cfg.base_channels) +
                                     " not divisible by 4 (four stem branches)");
  if (cfg.base_channels < 4 || cfg.in_channels < 1 || cfg.ssm_state_dim < 1 ||
      cfg.roi_size < 8 || cfg.dropout_rate < 0 || cfg.dropout_rate >= 1)
    fail(ErrorCode::ConfigError, "model config field out of range");
  return cfg;
}

/// Loss mixture. Component weights are fixed; the task balance factor
/// lambda_faz depends on the field of view.
struct LossWeights {
  double rv_dice = 0.6, rv_boundary = 0.2, rv_tversky = 0.1, rv_hausdorff = 0.1;
  double faz_dice = 0.8, faz_boundary = 0.2;
  double lambda_rv = 1.0;
  double lambda_faz = 6.1;  // 3M default; 4.0 for 6M

  static LossWeights for_field(const std::string& field) {
    LossWeights w;
    if (field == "3M")
      w.lambda_faz = 6.1;
    else if (field == "6M")
      w.lambda_faz = 4.0;
    else
      fail(ErrorCode::ConfigError, "field must be 3M or 6M, got " + field);
    return w;
  }
};

/// Optimization schedule knobs.
struct TrainConfig {
  long epochs = 100;
  long batch_size = 2;
  double weight_decay = 1e-2;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double lr_max = 1e-3;
  double lr_init = 5e-4;
  long warmup_epochs = 10;
  double lr_min = 1e-6;
  double eval_start_fraction = 0.7;
  long periodic_ckpt_every = 5;
  std::uint64_t seed = 0;
};

inline TrainConfig validate_train_config(TrainConfig tc) {
  if (!(tc.lr_init > 0 && tc.lr_init <= tc.lr_max))
    fail(ErrorCode::ConfigError, "need 0 < lr_init <= lr_max");
  if (!(tc.warmup_epochs < tc.epochs && tc.warmup_epochs >= 0))
    fail(ErrorCode::ConfigError, "need 0 <= warmup_epochs < epochs");
  if (!(tc.eval_start_fraction > 0 && tc.eval_start_fraction < 1))
    fail(ErrorCode::ConfigError, "need eval_start_fraction in (0,1)");
  if (tc.epochs < 1 || tc.batch_size < 1 || tc.periodic_ckpt_every < 1)
    fail(ErrorCode::ConfigError, "train config field out of range");
  return tc;
}

}  // namespace octaseg
