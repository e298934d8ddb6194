#include "typrec/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace typrec {

void ScoringConfig::validate() const {
  if (k < 1) throw InputError("top-k must be >= 1");
  if (struct_priority_margin < 0.0 || struct_priority_margin >= 1.0) {
    throw InputError("struct priority margin must be in [0, 1)");
  }
  if (weight_exponent < 0.0) throw InputError("weight exponent must be >= 0");
}

double context_contribution(std::uint32_t n, std::uint32_t n_max,
                            std::uint32_t distinct_label_count,
                            double weight_exponent) {
  assert(n >= 1 && n <= n_max && distinct_label_count >= 1);
  double ratio = static_cast<double>(n) / static_cast<double>(n_max);
  double weight =
      weight_exponent == 1.0 ? ratio : std::pow(ratio, weight_exponent);
  double diversity = 1.0 / static_cast<double>(distinct_label_count);
  return 0.5 + 0.5 * weight * diversity;
}

double normalize_confidence(double s_star, std::uint32_t matched_contexts) {
  double m = static_cast<double>(matched_contexts);
  double baseline = 0.5 * m;
  if (matched_contexts > 0 && m > baseline && s_star > baseline) {
    double value = (s_star - baseline) / (m - baseline);
    return std::clamp(value, 0.0, 1.0);
  }
  return 0.0;
}

std::vector<Candidate> score_candidates(const MatchEvidence& evidence,
                                        const ScoringConfig& config,
                                        std::uint32_t n_max,
                                        std::span<const std::uint64_t> label_frequencies,
                                        std::span<const std::string> label_names) {
  std::vector<Candidate> ranked;
  ranked.reserve(evidence.by_label.size());
  for (const auto& [label_id, matches] : evidence.by_label) {
    Candidate candidate;
    candidate.label_id = label_id;
    candidate.name = label_id < label_names.size() ? label_names[label_id]
                                                   : std::string();
    for (const ContextMatch& match : matches) {
      if (!match.in_top_k) continue;
      double contribution = context_contribution(
          match.n, n_max, match.distinct_label_count, config.weight_exponent);
      candidate.contributions.push_back(contribution);
      candidate.raw_score += contribution;
    }
    candidate.matched_context_count =
        static_cast<std::uint32_t>(candidate.contributions.size());
    if (candidate.matched_context_count > 0) {
      ranked.push_back(std::move(candidate));
    }
  }
  auto frequency = [&label_frequencies](const Candidate& c) {
    return c.label_id < label_frequencies.size() ? label_frequencies[c.label_id]
                                                 : 0ull;
  };
  std::sort(ranked.begin(), ranked.end(),
            [&frequency](const Candidate& a, const Candidate& b) {
              if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
              std::uint64_t fa = frequency(a);
              std::uint64_t fb = frequency(b);
              if (fa != fb) return fa > fb;
              return a.name < b.name;
            });
  return ranked;
}

void apply_struct_priority(std::vector<Candidate>& ranked, const TypeLibrary& types,
                           Bitness bitness, double margin) {
  if (ranked.empty()) return;
  auto kind_of = [&](const Candidate& c) {
    const TypeLabel* label = types.find(c.name, bitness);
    return label ? label->kind : TypeKind::Other;
  };
  if (is_struct_kind(kind_of(ranked.front()))) return;
  double floor = (1.0 - margin) * ranked.front().raw_score;
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    if (ranked[i].raw_score < floor) break;  // ranked by score descending
    if (is_struct_kind(kind_of(ranked[i]))) {
      std::rotate(ranked.begin(), ranked.begin() + i, ranked.begin() + i + 1);
      return;
    }
  }
}

InferenceEngine::InferenceEngine(const DatabaseEnsemble& ensemble,
                                 const TypeLibrary* types, ScoringConfig config)
    : ensemble_(&ensemble), types_(types), config_(config) {
  config_.validate();
}

MatchEvidence InferenceEngine::collect_variable_evidence(
    const TokenStream& stream, std::string_view identifier) const {
  MatchEvidence evidence;
  auto it = stream.occurrences.find(std::string(identifier));
  if (it == stream.occurrences.end()) return evidence;
  // Occurrence-major, window-size-minor collection keeps contribution sums
  // in a fixed order.
  std::uint32_t ordinal = 0;
  for (std::uint32_t index : it->second) {
    for (const NGramDatabase& db : ensemble_->databases()) {
      NGramKey key = variable_window_key(stream, index, db.n());
      QueryResult result = db.query(key, config_.k);
      for (const LabelCount& candidate : result.candidates) {
        evidence.by_label[candidate.label_id].push_back(
            ContextMatch{ordinal, db.n(), candidate.count,
                         result.distinct_label_count, true});
      }
    }
    ++ordinal;
  }
  return evidence;
}

Prediction InferenceEngine::finish(std::string binary_id, std::uint64_t address,
                                   std::string identifier, MatchEvidence evidence,
                                   Bitness bitness, Threshold tau,
                                   const CalibrationMap* calibration) const {
  Prediction prediction;
  prediction.binary_id = std::move(binary_id);
  prediction.address = address;
  prediction.identifier = std::move(identifier);
  prediction.candidates =
      score_candidates(evidence, config_, ensemble_->n_max(),
                       ensemble_->label_frequencies(), ensemble_->label_names());
  if (config_.struct_priority && types_ != nullptr) {
    apply_struct_priority(prediction.candidates, *types_, bitness,
                          config_.struct_priority_margin);
  }
  if (prediction.candidates.empty()) {
    prediction.abstained = true;
    prediction.c_norm = 0.0;
    return prediction;
  }
  const Candidate& chosen = prediction.candidates.front();
  prediction.raw_score = chosen.raw_score;
  prediction.c_norm =
      normalize_confidence(chosen.raw_score, chosen.matched_context_count);
  if (calibration != nullptr) {
    prediction.calibrated = calibration->apply(prediction.c_norm);
  }
  bool keep = chosen.matched_context_count >= config_.min_contexts &&
              passes_threshold(prediction.confidence(), tau);
  if (keep) {
    prediction.label = chosen.name;
    prediction.abstained = false;
  } else {
    prediction.abstained = true;
  }
  return prediction;
}

Prediction InferenceEngine::infer_variable(const AnnotatedFunction& function,
                                           const TokenStream& stream,
                                           std::string_view identifier,
                                           Threshold tau,
                                           const CalibrationMap* calibration) const {
  if (function.bitness != ensemble_->bitness()) {
    throw InputError("bitness mismatch: function is " +
                     std::string(to_string(function.bitness)) +
                     "-bit but the ensemble was trained for " +
                     std::string(to_string(ensemble_->bitness())) + "-bit");
  }
  if (ensemble_->vocabulary() != Vocabulary::Types) {
    throw InputError("vocabulary mismatch: variable inference requires a type "
                     "ensemble, not signatures");
  }
  MatchEvidence evidence = collect_variable_evidence(stream, identifier);
  return finish(function.binary_id, function.address, std::string(identifier),
                std::move(evidence), function.bitness, tau, calibration);
}

Prediction InferenceEngine::infer_variable(const AnnotatedFunction& function,
                                           std::string_view identifier,
                                           Threshold tau,
                                           const CalibrationMap* calibration) const {
  TokenStream stream = tokenize(function.source_text);
  return infer_variable(function, stream, identifier, tau, calibration);
}

std::vector<Prediction> InferenceEngine::infer_function(
    const AnnotatedFunction& function, Threshold tau,
    const CalibrationMap* calibration) const {
  TokenStream stream = tokenize(function.source_text);
  // Identifiers in first-occurrence order; call sites belong to the
  // signature pipeline and are skipped here.
  std::vector<std::pair<std::uint32_t, const std::string*>> order;
  order.reserve(stream.occurrences.size());
  for (const auto& [name, indices] : stream.occurrences) {
    bool is_call = std::any_of(indices.begin(), indices.end(),
                               [&stream](std::uint32_t index) {
                                 return is_call_occurrence(stream, index);
                               });
    if (is_call) continue;
    order.emplace_back(indices.front(), &name);
  }
  std::sort(order.begin(), order.end());
  std::vector<Prediction> predictions;
  predictions.reserve(order.size());
  for (const auto& [_, name] : order) {
    predictions.push_back(
        infer_variable(function, stream, *name, tau, calibration));
  }
  return predictions;
}

namespace {

AnnotatedFunction wrap_code(std::string_view code, Bitness bitness) {
  AnnotatedFunction fn;
  fn.bitness = bitness;
  fn.source_text = std::string(code);
  return fn;
}

}  // namespace

Prediction InferenceEngine::infer_variable_in_code(
    std::string_view code, Bitness bitness, std::string_view identifier,
    Threshold tau, const CalibrationMap* calibration) const {
  return infer_variable(wrap_code(code, bitness), identifier, tau, calibration);
}

std::vector<Prediction> InferenceEngine::infer_code(
    std::string_view code, Bitness bitness, Threshold tau,
    const CalibrationMap* calibration) const {
  return infer_function(wrap_code(code, bitness), tau, calibration);
}

PairCollection collect_calibration_pairs(std::span<const Prediction> predictions,
                                         const Corpus& corpus) {
  std::map<std::pair<std::string_view, std::uint64_t>, const AnnotatedFunction*>
      functions;
  for (const AnnotatedFunction& fn : corpus.functions) {
    functions[{fn.binary_id, fn.address}] = &fn;
  }
  PairCollection collection;
  for (const Prediction& prediction : predictions) {
    if (prediction.abstained) continue;
    auto it = functions.find({prediction.binary_id, prediction.address});
    if (it == functions.end()) {
      ++collection.skipped;
      continue;
    }
    auto annotation = it->second->variable_annotations.find(prediction.identifier);
    if (annotation == it->second->variable_annotations.end()) {
      ++collection.skipped;
      continue;
    }
    collection.pairs.push_back(CalibrationPair{
        prediction.c_norm, prediction.label == annotation->second});
  }
  return collection;
}

std::vector<Prediction> threshold_filter(std::span<const Prediction> predictions,
                                         Threshold tau) {
  std::vector<Prediction> kept;
  for (const Prediction& prediction : predictions) {
    if (prediction.abstained) continue;
    if (!passes_threshold(prediction.confidence(), tau)) continue;
    kept.push_back(prediction);
  }
  return kept;
}

namespace {
using json = nlohmann::ordered_json;
}

std::string prediction_to_json(const Prediction& prediction, std::uint32_t top_k) {
  json record;
  record["binary_id"] = prediction.binary_id;
  record["address"] = address_to_hex(prediction.address);
  record["identifier"] = prediction.identifier;
  if (prediction.label) {
    record["label"] = *prediction.label;
  } else {
    record["label"] = nullptr;
  }
  record["raw_score"] = prediction.raw_score;
  record["confidence"] = prediction.c_norm;
  if (prediction.calibrated) {
    record["calibrated"] = *prediction.calibrated;
  } else {
    record["calibrated"] = nullptr;
  }
  record["abstained"] = prediction.abstained;
  json candidates = json::array();
  std::size_t take = std::min<std::size_t>(top_k, prediction.candidates.size());
  for (std::size_t i = 0; i < take; ++i) {
    candidates.push_back({{"label", prediction.candidates[i].name},
                          {"score", prediction.candidates[i].raw_score}});
  }
  record["candidates"] = candidates;
  return record.dump();
}

Prediction prediction_from_json(std::string_view line) {
  json record = json::parse(line);
  Prediction prediction;
  prediction.binary_id = record.at("binary_id").get<std::string>();
  auto address = parse_hex_address(record.at("address").get<std::string>());
  if (!address) throw InputError("prediction record: invalid address");
  prediction.address = *address;
  prediction.identifier = record.at("identifier").get<std::string>();
  if (!record.at("label").is_null()) {
    prediction.label = record.at("label").get<std::string>();
  }
  prediction.raw_score = record.value("raw_score", 0.0);
  prediction.c_norm = record.value("confidence", 0.0);
  if (record.contains("calibrated") && !record.at("calibrated").is_null()) {
    prediction.calibrated = record.at("calibrated").get<double>();
  }
  prediction.abstained = record.value("abstained", !prediction.label.has_value());
  if (record.contains("candidates")) {
    for (const auto& entry : record.at("candidates")) {
      Candidate candidate;
      candidate.name = entry.at("label").get<std::string>();
      candidate.raw_score = entry.at("score").get<double>();
      prediction.candidates.push_back(std::move(candidate));
    }
  }
  return prediction;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<Prediction> predictions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      predictions.push_back(prediction_from_json(line));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": parse error: " + e.what());
    }
  }
  return predictions;
}

void save_predictions(std::span<const Prediction> predictions,
                      const std::filesystem::path& path, std::uint32_t top_k) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const Prediction& prediction : predictions) {
    out << prediction_to_json(prediction, top_k) << "\n";
  }
}

}  // namespace typrec
