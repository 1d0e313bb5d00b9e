#pragma once

#include <Eigen/Dense>

#include <vector>

namespace ionphase {

struct Peak {
  int index = 0;
  double value = 0.0;
  double prominence = 0.0;
};

/// Local maxima of a sampled curve with their topographic prominence.
/// Plateaus report their first sample; curve endpoints are not peaks.
inline std::vector<Peak> find_peaks(const Eigen::VectorXd& y, double min_prominence) {
  std::vector<Peak> peaks;
  const int n = static_cast<int>(y.size());
  int i = 1;
  while (i < n - 1) {
    if (y[i] > y[i - 1]) {
      int j = i;
      while (j + 1 < n && y[j + 1] == y[i]) ++j;  // plateau
      if (j + 1 < n && y[j + 1] < y[i]) {
        // prominence: lowest saddle toward higher ground on each side
        double left_base = y[i];
        for (int l = i - 1; l >= 0; --l) {
          left_base = std::min(left_base, y[l]);
          if (y[l] > y[i]) break;
        }
        double right_base = y[i];
        for (int r = j + 1; r < n; ++r) {
          right_base = std::min(right_base, y[r]);
          if (y[r] > y[i]) break;
        }
        const double prom = y[i] - std::max(left_base, right_base);
        if (prom >= min_prominence) peaks.push_back({i, y[i], prom});
      }
      i = j + 1;
    } else {
      ++i;
    }
  }
  return peaks;
}

}  // namespace ionphase
