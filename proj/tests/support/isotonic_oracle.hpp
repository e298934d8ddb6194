#pragma once

// Exhaustive oracle for monotone step-function fits: enumerate every
// contiguous partition of the distinct scores, fit each block at its
// weighted mean, keep partitions whose block means are non-decreasing, and
// take the minimum squared error. The optimal monotone fit is one of these,
// so the minimum equals the true optimum for small inputs.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "typrec/calibrate.hpp"

namespace testsupport {

inline double fit_sse(const typrec::CalibrationMap& map,
                      std::span<const typrec::CalibrationPair> pairs) {
  double sse = 0.0;
  for (const typrec::CalibrationPair& pair : pairs) {
    double fitted = map.apply(pair.score);
    double y = pair.correct ? 1.0 : 0.0;
    sse += (fitted - y) * (fitted - y);
  }
  return sse;
}

inline double best_monotone_sse(std::span<const typrec::CalibrationPair> pairs) {
  std::map<double, std::pair<double, double>> pooled;  // score -> (sum, weight)
  for (const typrec::CalibrationPair& pair : pairs) {
    auto& [sum, weight] = pooled[pair.score];
    sum += pair.correct ? 1.0 : 0.0;
    weight += 1.0;
  }
  std::vector<std::pair<double, double>> points;
  std::vector<double> scores;
  for (const auto& [score, sw] : pooled) {
    scores.push_back(score);
    points.push_back(sw);
  }
  std::size_t n = points.size();
  double best = std::numeric_limits<double>::infinity();
  // Bit b of `mask` set means a block boundary after point b.
  for (std::uint64_t mask = 0; mask < (1ull << (n - 1)); ++mask) {
    std::vector<double> level(n);
    bool monotone = true;
    double prev_mean = -1.0;
    std::size_t start = 0;
    for (std::size_t end = 0; end < n; ++end) {
      bool boundary = end + 1 == n || ((mask >> end) & 1);
      if (!boundary) continue;
      double sum = 0.0, weight = 0.0;
      for (std::size_t i = start; i <= end; ++i) {
        sum += points[i].first;
        weight += points[i].second;
      }
      double mean = sum / weight;
      if (mean < prev_mean) {
        monotone = false;
        break;
      }
      for (std::size_t i = start; i <= end; ++i) level[i] = mean;
      prev_mean = mean;
      start = end + 1;
    }
    if (!monotone) continue;
    double sse = 0.0;
    for (const typrec::CalibrationPair& pair : pairs) {
      std::size_t index =
          std::lower_bound(scores.begin(), scores.end(), pair.score) -
          scores.begin();
      double y = pair.correct ? 1.0 : 0.0;
      sse += (level[index] - y) * (level[index] - y);
    }
    best = std::min(best, sse);
  }
  return best;
}

}  // namespace testsupport
