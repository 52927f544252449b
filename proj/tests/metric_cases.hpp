#pragma once

#include <vector>

#include "hypertta/metrics.hpp"

// Five fixed confusion matrices with metrics worked out by hand from the
// definitions OA = trace/total, AA = mean per-class recall over classes with
// true pixels, kappa = (p_o - p_e)/(1 - p_e), p_e = sum_c row_c*col_c/total^2.
// Shared by the unit suite and the acceptance gate.

namespace hypertta::testcases {

struct MetricCase {
  std::vector<std::vector<std::int64_t>> counts;  // rows = truth
  double oa;
  double aa;
  double kappa;
  bool expect_warning;
  const char* name;
};

inline std::vector<MetricCase> metric_cases() {
  return {
      // Perfect diagonal.
      {{{3, 0}, {0, 5}}, 1.0, 1.0, 1.0, false, "diagonal 2x2"},
      // Worked 2x2: p_e = (2*3 + 2*1)/16 = 0.5.
      {{{2, 0}, {1, 1}}, 0.75, 0.75, 0.5, false, "worked 2x2"},
      // 3x3: trace 12/16; p_e = (6*7 + 6*4 + 4*5)/256 = 86/256;
      // kappa = (0.75 - 86/256)/(1 - 86/256) = 53/85; AA = (5/6 + 1/2 + 1)/3.
      {{{5, 1, 0}, {2, 3, 1}, {0, 0, 4}}, 0.75, 7.0 / 9.0, 53.0 / 85.0, false, "mixed 3x3"},
      // Absent class 2: excluded from AA with a warning; p_e = (4*5 + 4*3)/64.
      {{{4, 0, 0}, {1, 3, 0}, {0, 0, 0}}, 0.875, 0.875, 0.75, true, "absent class"},
      // Anti-diagonal: total disagreement, p_e = 0.5, kappa = -1.
      {{{0, 3}, {3, 0}}, 0.0, 0.0, -1.0, false, "anti-diagonal"},
  };
}

inline ConfusionMatrix to_matrix(const MetricCase& c) {
  ConfusionMatrix cm(static_cast<int>(c.counts.size()));
  for (int t = 0; t < cm.classes; ++t) {
    for (int p = 0; p < cm.classes; ++p) {
      cm.at(t, p) = c.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
  }
  return cm;
}

}  // namespace hypertta::testcases
