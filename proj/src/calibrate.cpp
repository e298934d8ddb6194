#include "typrec/calibrate.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace typrec {

CalibrationMap CalibrationMap::fit_isotonic(std::span<const CalibrationPair> pairs) {
  if (pairs.empty()) {
    throw InputError("isotonic fit requires at least one pair");
  }
  std::vector<CalibrationPair> sorted(pairs.begin(), pairs.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CalibrationPair& a, const CalibrationPair& b) {
                     return a.score < b.score;
                   });

  // Pairs at the same score collapse to one weighted point so the fitted
  // step function is well-defined on scores.
  struct Block {
    double start_score;
    double sum;     // sum of correctness indicators
    double weight;  // number of pooled raw pairs
    double mean() const { return sum / weight; }
  };
  std::vector<Block> points;
  for (const CalibrationPair& pair : sorted) {
    double y = pair.correct ? 1.0 : 0.0;
    if (!points.empty() && points.back().start_score == pair.score) {
      points.back().sum += y;
      points.back().weight += 1.0;
    } else {
      points.push_back(Block{pair.score, y, 1.0});
    }
  }

  std::vector<Block> blocks;
  for (const Block& point : points) {
    blocks.push_back(point);
    // Pool adjacent violators: merge while the previous block's mean
    // strictly exceeds the current one's.
    while (blocks.size() >= 2) {
      Block& prev = blocks[blocks.size() - 2];
      Block& cur = blocks.back();
      if (prev.mean() <= cur.mean()) break;
      prev.sum += cur.sum;
      prev.weight += cur.weight;
      blocks.pop_back();
    }
  }

  CalibrationMap map;
  map.breakpoints_.reserve(blocks.size());
  for (const Block& block : blocks) {
    map.breakpoints_.emplace_back(block.start_score,
                                  std::clamp(block.mean(), 0.0, 1.0));
  }
  return map;
}

double CalibrationMap::apply(double score) const {
  if (breakpoints_.empty()) {
    throw InternalError("calibration map is empty");
  }
  auto it = std::upper_bound(
      breakpoints_.begin(), breakpoints_.end(), score,
      [](double value, const std::pair<double, double>& breakpoint) {
        return value < breakpoint.first;
      });
  if (it == breakpoints_.begin()) return breakpoints_.front().second;
  return std::prev(it)->second;
}

void CalibrationMap::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  nlohmann::ordered_json breakpoints = nlohmann::ordered_json::array();
  for (const auto& [score, probability] : breakpoints_) {
    breakpoints.push_back({score, probability});
  }
  doc["breakpoints"] = breakpoints;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

CalibrationMap CalibrationMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": parse error: " + e.what());
  }
  if (doc.value("version", 0) != 1) {
    throw InputError(path.string() + ": unsupported calibration map version");
  }
  CalibrationMap map;
  double prev_score = 0.0;
  double prev_value = 0.0;
  for (const auto& entry : doc.at("breakpoints")) {
    double score = entry.at(0).get<double>();
    double value = entry.at(1).get<double>();
    if (value < 0.0 || value > 1.0) {
      throw InputError(path.string() + ": calibrated values must lie in [0, 1]");
    }
    if (!map.breakpoints_.empty() &&
        (score <= prev_score || value < prev_value)) {
      throw InputError(path.string() + ": breakpoints must be monotone");
    }
    map.breakpoints_.emplace_back(score, value);
    prev_score = score;
    prev_value = value;
  }
  if (map.breakpoints_.empty()) {
    throw InputError(path.string() + ": calibration map has no breakpoints");
  }
  return map;
}

bool passes_threshold(double confidence, Threshold tau) {
  if (!tau) return true;
  if (*tau >= 1.0) return confidence >= *tau;
  return confidence > *tau;
}

}  // namespace typrec
