// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "octaseg/dataio/augment.hpp"
#include "octaseg/nn/networks.hpp"
#include "octaseg/objective/losses.hpp"
#include "octaseg/objective/metrics.hpp"
#include "octaseg/train/checkpoint.hpp"
#include "octaseg/train/optim.hpp"
#include "octaseg/train/policy.hpp"
#include "octaseg/train/schedule.hpp"

namespace octaseg {

inline nlohmann::json train_config_to_json(const TrainConfig& tc) {
  return {{"epochs", tc.epochs},
          {"batch_size", tc.batch_size},
          {"weight_decay", tc.weight_decay},
          {"lr_max", tc.lr_max},
          {"lr_init", tc.lr_init},
          {"warmup_epochs", tc.warmup_epochs},
          {"lr_min", tc.lr_min},
          {"eval_start_fraction", tc.eval_start_fraction},
          {"periodic_ckpt_every", tc.periodic_ckpt_every},
          {"seed", tc.seed}};
}

struct EpochLog {
  long epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<CheckpointRecord> records;  // three best kinds plus periodics
  std::vector<EpochLog> log;
  double final_rv_dice = 0.0, final_faz_dice = 0.0;  // last evaluation seen
};

/// Mean Dice of binarized predictions over a sample set, without dropout or
/// flip averaging.
template <typename T>
std::pair<double, double> evaluate_joint(const JointNet<T>& net,
                                         const std::vector<OCTASample<T>>& set) {
  GradMode::NoGradGuard off;
  std::vector<double> rv_scores, faz_scores;
  for (const auto& s : set) {
    JointOut<T> out = net(Var<T>::leaf(s.image));
    rv_scores.push_back(dice_metric(binarize(out.rv.prob.value()), s.rv));
    faz_scores.push_back(dice_metric(binarize(out.faz_full.value()), s.faz));
  }
  return {aggregate(rv_scores).first, aggregate(faz_scores).first};
}

template <typename T>
class Trainer {
 public:
  Trainer(JointNet<T>& net, ParamRegistry<T>& reg, const TrainConfig& tc,
          const LossWeights& lw, AugmentationPolicy aug = {})
      : net_(net), reg_(reg), tc_(tc), lw_(lw), aug_(aug) {}

  TrainResult run(const std::vector<OCTASample<T>>& train_set,
                  const std::vector<OCTASample<T>>& val_set, const std::string& out_dir,
                  std::ostream* log = nullptr) {
    require(!train_set.empty(), ErrorCode::EmptySet, "training set is empty");
    namespace fs = std::filesystem;
    if (!out_dir.empty()) fs::create_directories(out_dir);
    AdamW<T> opt(reg_, tc_);
    CheckpointPolicy policy(tc_.epochs, tc_.eval_start_fraction, tc_.periodic_ckpt_every);
    TrainResult result;
    long n = static_cast<long>(train_set.size());
    long steps_per_epoch = (n + tc_.batch_size - 1) / tc_.batch_size;

    for (long epoch = 0; epoch < tc_.epochs; ++epoch) {
      std::vector<long> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), 0L);
      Rng order_rng = Rng::derive(tc_.seed, "order", static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), order_rng.engine());

      double epoch_loss = 0.0;
      double lr = 0.0;
      for (long step = 0; step < steps_per_epoch; ++step) {
        double fraction = (static_cast<double>(epoch) +
                           static_cast<double>(step) / static_cast<double>(steps_per_epoch)) /
                          static_cast<double>(tc_.epochs);
        lr = lr_at(fraction, tc_);
        Rng drop_rng = Rng::derive(tc_.seed, "drop", static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(step));
        reg_.zero_grad();
        Var<T> batch_loss;
        long batch_n = 0;
        std::string batch_ids;
        for (long k = step * tc_.batch_size; k < std::min(n, (step + 1) * tc_.batch_size);
             ++k) {
          const OCTASample<T>& raw = train_set[static_cast<size_t>(order[static_cast<size_t>(k)])];
          Rng aug_rng = Rng::derive(tc_.seed, raw.id, static_cast<std::uint64_t>(epoch));
          OCTASample<T> s = augment(raw, aug_rng, aug_);
          JointOut<T> out = net_(Var<T>::leaf(s.image), &drop_rng);
          Var<T> loss = total_loss(out.rv.prob, s.rv, out.faz_full, s.faz, lw_);
          batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
          ++batch_n;
          batch_ids += (batch_ids.empty() ? "" : ",") + raw.id;
        }
        batch_loss = scale(batch_loss, T(1) / static_cast<T>(batch_n));
        double lv = static_cast<double>(batch_loss.value()[0]);
        require(std::isfinite(lv), ErrorCode::NonFiniteLoss,
                "non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(step) + " (samples " + batch_ids + ")");
        backward(batch_loss);
        opt.step(lr);
        epoch_loss += lv;
      }
      epoch_loss /= static_cast<double>(steps_per_epoch);
      result.log.push_back({epoch, epoch_loss, lr});
      if (log) *log << "epoch " << epoch << " loss " << epoch_loss << " lr " << lr << "\n";

      if (policy.should_eval(epoch) && !val_set.empty()) {
        auto [rv_d, faz_d] = evaluate_joint(net_, val_set);
        result.final_rv_dice = rv_d;
        result.final_faz_dice = faz_d;
        if (log) *log << "eval epoch " << epoch << " rv_dice " << rv_d << " faz_dice "
                      << faz_d << "\n";
        CheckpointPolicy::Update u = policy.observe(epoch, rv_d, faz_d);
        auto save_kind = [&](const std::string& kind, const std::string& file) {
          if (out_dir.empty()) return std::string();
          std::string path = (fs::path(out_dir) / file).string();
          nlohmann::json meta = {{"kind", kind},
                                 {"epoch", epoch},
                                 {"rv_dice", rv_d},
                                 {"faz_dice", faz_d},
                                 {"model", model_config_to_json(net_.config())},
                                 {"train", train_config_to_json(tc_)}};
          save_checkpoint(path, reg_, meta);
          return path;
        };
        if (u.best_rv) save_kind("best_rv", "best_rv.ckpt");
        if (u.best_faz) save_kind("best_faz", "best_faz.ckpt");
        if (u.best_avg) save_kind("best_avg", "best_avg.ckpt");
        if (u.periodic) {
          std::string path = save_kind("periodic", "epoch_" + std::to_string(epoch) + ".ckpt");
          result.records.push_back({"periodic", epoch, rv_d, faz_d, path});
        }
      }
    }

    auto finalize = [&](CheckpointRecord rec, const std::string& file) {
      if (rec.epoch < 0) return;
      rec.path = out_dir.empty() ? "" : (fs::path(out_dir) / file).string();
      result.records.push_back(rec);
    };
    finalize(policy.best_rv(), "best_rv.ckpt");
    finalize(policy.best_faz(), "best_faz.ckpt");
    finalize(policy.best_avg(), "best_avg.ckpt");
    return result;
  }

 private:
  JointNet<T>& net_;
  ParamRegistry<T>& reg_;
  TrainConfig tc_;
  LossWeights lw_;
  AugmentationPolicy aug_;
};

}  // namespace octaseg
