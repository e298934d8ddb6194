#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "typrec/common.hpp"

namespace typrec {

struct CalibrationPair {
  double score = 0.0;  // normalized confidence in [0, 1]
  bool correct = false;
};

// Non-decreasing piecewise-constant map from confidence to empirical
// correctness probability. Blocks are left-closed: a score equal to a
// breakpoint gets that block's value; scores outside the fitted range clamp
// to the first/last block.
class CalibrationMap {
 public:
  // Pool-adjacent-violators fit minimizing squared error among monotone step
  // functions. Pairs with equal scores are pooled up front so the result is
  // a function of score. Throws InputError on empty input.
  static CalibrationMap fit_isotonic(std::span<const CalibrationPair> pairs);

  double apply(double score) const;

  const std::vector<std::pair<double, double>>& breakpoints() const {
    return breakpoints_;
  }

  void save(const std::filesystem::path& path) const;
  static CalibrationMap load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<double, double>> breakpoints_;  // (score, probability)
};

// Threshold gate shared by inference, filtering, and metrics: strict
// comparison (> tau), except at tau = 1.0 where >= applies so the top bucket
// is not empty by construction. A disengaged threshold passes everything.
bool passes_threshold(double confidence, Threshold tau);

}  // namespace typrec
