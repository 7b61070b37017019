// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "octaseg/objective/metrics.hpp"

namespace octaseg {

struct MetricsRow {
  std::string id;
  double rv_dice = 0, rv_jaccard = 0, faz_dice = 0, faz_jaccard = 0;
};

/// Per-sample metrics table with a trailing mean+-std summary row.
inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  require(!rows.empty(), ErrorCode::EmptySet, "no metric rows to write");
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write " + path);
  out << "id,rv_dice,rv_jaccard,faz_dice,faz_jaccard\n";
  char line[256];
  std::vector<double> rd, rj, fd, fj;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%.4f,%.4f\n", r.id.c_str(), r.rv_dice,
                  r.rv_jaccard, r.faz_dice, r.faz_jaccard);
    out << line;
    rd.push_back(r.rv_dice);
    rj.push_back(r.rv_jaccard);
    fd.push_back(r.faz_dice);
    fj.push_back(r.faz_jaccard);
  }
  auto [rdm, rds] = aggregate(rd);
  auto [rjm, rjs] = aggregate(rj);
  auto [fdm, fds] = aggregate(fd);
  auto [fjm, fjs] = aggregate(fj);
  std::snprintf(line, sizeof(line),
                "summary,%.4f+-%.4f,%.4f+-%.4f,%.4f+-%.4f,%.4f+-%.4f\n", rdm, rds, rjm,
                rjs, fdm, fds, fjm, fjs);
  out << line;
}

}  // namespace octaseg
