// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "octaseg/train/trainer.hpp"

namespace octaseg {

// Component ablations. Each study trains the joint model once per row of the
// standard 8-row toggle grid (all-off, each toggle alone, each pair, all-on)
// and reports overlap metrics on the evaluation split.

enum class AblationStudy { Vessel, Zone };

struct AblationRow {
  long id = 0;                              // 1-based row number
  bool t1 = false, t2 = false, t3 = false;  // study toggles in column order
  double rv_dice = 0, rv_jaccard = 0, faz_dice = 0, faz_jaccard = 0;
};

inline constexpr std::array<std::array<bool, 3>, 8> kAblationGrid = {{
    {false, false, false},
    {true, false, false},
    {false, true, false},
    {false, false, true},
    {true, true, false},
    {true, false, true},
    {false, true, true},
    {true, true, true},
}};

/// Binarized Dice and Jaccard means for both targets over a sample set.
template <typename T>
AblationRow evaluate_row(const JointNet<T>& net, const std::vector<OCTASample<T>>& set) {
  GradMode::NoGradGuard off;
  std::vector<double> rd, rj, fd, fj;
  for (const auto& s : set) {
    JointOut<T> out = net(Var<T>::leaf(s.image));
    Tensor<T> rv_bin = binarize(out.rv.prob.value());
    Tensor<T> faz_bin = binarize(out.faz_full.value());
    rd.push_back(dice_metric(rv_bin, s.rv));
    rj.push_back(jaccard_metric(rv_bin, s.rv));
    fd.push_back(dice_metric(faz_bin, s.faz));
    fj.push_back(jaccard_metric(faz_bin, s.faz));
  }
  AblationRow row;
  row.rv_dice = aggregate(rd).first;
  row.rv_jaccard = aggregate(rj).first;
  row.faz_dice = aggregate(fd).first;
  row.faz_jaccard = aggregate(fj).first;
  return row;
}

template <typename T>
std::vector<AblationRow> run_ablation(AblationStudy study, ModelConfig base,
                                      const TrainConfig& tc, const LossWeights& lw,
                                      const std::vector<OCTASample<T>>& train_set,
                                      const std::vector<OCTASample<T>>& eval_set,
                                      AugmentationPolicy aug = {},
                                      std::ostream* log = nullptr) {
  std::vector<AblationRow> rows;
  for (size_t r = 0; r < kAblationGrid.size(); ++r) {
    const auto& toggles = kAblationGrid[r];
    ModelConfig cfg = base;
    if (study == AblationStudy::Vessel) {
      cfg.hdfe = toggles[0];
      cfg.vmaf = toggles[1];
      cfg.cmbf = toggles[2];
    } else {
      cfg.cfeb = toggles[0];
      cfg.roi = toggles[1];
      cfg.rv_prior = toggles[2];
    }
    long h = train_set.front().image.dim(2), w = train_set.front().image.dim(3);
    cfg = validate_config(cfg, {h, w});
    ParamRegistry<T> reg;
    Rng rng(cfg.seed);
    JointNet<T> net(reg, rng, cfg);
    Trainer<T> trainer(net, reg, tc, lw, aug);
    if (log) *log << "ablation row " << (r + 1) << " toggles " << toggles[0] << toggles[1]
                  << toggles[2] << "\n";
    trainer.run(train_set, {}, "", log);
    AblationRow row = evaluate_row(net, eval_set);
    row.id = static_cast<long>(r + 1);
    row.t1 = toggles[0];
    row.t2 = toggles[1];
    row.t3 = toggles[2];
    rows.push_back(row);
  }
  return rows;
}

/// Vessel study columns mirror (hdfe, vmaf, cmbf); zone study columns mirror
/// (cfeb, roi, rv_prior) and report only the zone metrics.
inline void write_ablation_csv(const std::string& path, AblationStudy study,
                               const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write " + path);
  char line[256];
  if (study == AblationStudy::Vessel) {
    out << "id,hdfe,vmaf,cmbf,rv_dice,rv_jaccard,faz_dice,faz_jaccard\n";
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%ld,%d,%d,%d,%.4f,%.4f,%.4f,%.4f\n", r.id,
                    int(r.t1), int(r.t2), int(r.t3), r.rv_dice, r.rv_jaccard, r.faz_dice,
                    r.faz_jaccard);
      out << line;
    }
  } else {
    out << "id,cfeb,roi,rv_prior,faz_dice,faz_jaccard\n";
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%ld,%d,%d,%d,%.4f,%.4f\n", r.id, int(r.t1),
                    int(r.t2), int(r.t3), r.faz_dice, r.faz_jaccard);
      out << line;
    }
  }
}

}  // namespace octaseg
