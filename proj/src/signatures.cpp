#include "typrec/signatures.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace typrec {

DatabaseEnsemble build_signature_database(const Corpus& corpus,
                                          std::span<const std::uint32_t> portfolio,
                                          Bitness bitness, unsigned threads,
                                          BuildCounters* counters) {
  bool any_calls = false;
  for (const AnnotatedFunction& fn : corpus.functions) {
    if (fn.split == Split::Train && fn.bitness == bitness &&
        !fn.call_annotations.empty()) {
      any_calls = true;
      break;
    }
  }
  if (!any_calls) {
    throw InputError("no call annotations in train-split functions with bitness " +
                     std::string(to_string(bitness)));
  }
  return DatabaseEnsemble::build(corpus, portfolio, bitness,
                                 Vocabulary::Signatures, threads, counters);
}

std::vector<CallSitePrediction> infer_call_sites(const AnnotatedFunction& function,
                                                 const DatabaseEnsemble& ensemble,
                                                 const ScoringConfig& config,
                                                 Threshold tau,
                                                 const CalibrationMap* calibration) {
  if (ensemble.vocabulary() != Vocabulary::Signatures) {
    throw InputError("vocabulary mismatch: call-site inference requires a "
                     "signature ensemble");
  }
  if (function.bitness != ensemble.bitness()) {
    throw InputError("bitness mismatch: function is " +
                     std::string(to_string(function.bitness)) +
                     "-bit but the ensemble was trained for " +
                     std::string(to_string(ensemble.bitness())) + "-bit");
  }
  config.validate();

  TokenStream stream = tokenize(function.source_text);
  std::vector<CallSitePrediction> predictions;
  for (std::size_t index = 0; index < stream.tokens.size(); ++index) {
    const Token& token = stream.tokens[index];
    if (token.cls != TokenClass::Identifier) continue;
    if (!is_call_occurrence(stream, index)) continue;

    MatchEvidence evidence;
    for (const NGramDatabase& db : ensemble.databases()) {
      auto key = call_window_key(stream, index, db.n());
      if (!key) continue;
      QueryResult result = db.query(*key, config.k);
      for (const LabelCount& candidate : result.candidates) {
        evidence.by_label[candidate.label_id].push_back(ContextMatch{
            0, db.n(), candidate.count, result.distinct_label_count, true});
      }
    }

    CallSitePrediction prediction;
    prediction.binary_id = function.binary_id;
    prediction.function_address = function.address;
    prediction.token_index = static_cast<std::uint32_t>(index);
    prediction.callee = token.text;
    prediction.candidates =
        score_candidates(evidence, config, ensemble.n_max(),
                         ensemble.label_frequencies(), ensemble.label_names());
    if (!prediction.candidates.empty()) {
      const Candidate& chosen = prediction.candidates.front();
      prediction.c_norm =
          normalize_confidence(chosen.raw_score, chosen.matched_context_count);
      if (calibration != nullptr) {
        prediction.calibrated = calibration->apply(prediction.c_norm);
      }
      bool keep = chosen.matched_context_count >= config.min_contexts &&
                  passes_threshold(prediction.confidence(), tau);
      if (keep) {
        prediction.signature = chosen.name;
        prediction.abstained = false;
      }
    }
    predictions.push_back(std::move(prediction));
  }
  return predictions;
}

std::vector<FunctionPrediction> aggregate_by_address(
    std::span<const CallSitePrediction> sites, Threshold tau) {
  std::map<std::string, std::map<std::string, std::vector<double>>> by_callee;
  std::map<std::string, std::uint32_t> surviving;
  for (const CallSitePrediction& site : sites) {
    if (site.abstained || !site.signature) continue;
    if (!passes_threshold(site.confidence(), tau)) continue;
    by_callee[site.callee][*site.signature].push_back(site.confidence());
    surviving[site.callee] += 1;
  }

  std::vector<FunctionPrediction> predictions;
  for (const auto& [callee, votes] : by_callee) {
    FunctionPrediction best;
    best.callee = callee;
    best.site_count = surviving[callee];
    bool first = true;
    for (const auto& [signature, confidences] : votes) {
      // Summation in sorted order keeps the weight independent of call-site
      // input order.
      std::vector<double> ordered = confidences;
      std::sort(ordered.begin(), ordered.end());
      double confidence_sum = 0.0;
      for (double c : ordered) confidence_sum += c;
      std::uint32_t site_votes = static_cast<std::uint32_t>(ordered.size());
      double weight = confidence_sum * static_cast<double>(site_votes);
      best.votes.push_back(SignatureVote{signature, weight, site_votes});
      // Ties break toward more contributing sites, then name ascending; the
      // map iterates names ascending, so strict improvement keeps the first.
      bool better = first || weight > best.weight ||
                    (weight == best.weight &&
                     site_votes > best.contributing_contexts);
      if (better) {
        best.signature = signature;
        best.weight = weight;
        best.contributing_contexts = site_votes;
        first = false;
      }
    }
    predictions.push_back(std::move(best));
  }
  return predictions;
}

TriageReport triage_report(std::span<const FunctionPrediction> predictions,
                           std::string_view prefix,
                           const std::map<std::string, std::string>* ground_truth) {
  TriageReport report;
  report.prefix = std::string(prefix);
  for (const FunctionPrediction& prediction : predictions) {
    if (!std::string_view(prediction.signature).starts_with(prefix)) continue;
    report.entries.push_back(
        TriageEntry{prediction.callee, prediction.signature, prediction.weight});
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const TriageEntry& a, const TriageEntry& b) {
              if (a.weight != b.weight) return a.weight > b.weight;
              return a.callee < b.callee;
            });
  if (ground_truth == nullptr) return report;

  report.has_ground_truth = true;
  for (const auto& [callee, signature] : *ground_truth) {
    if (std::string_view(signature).starts_with(prefix)) {
      ++report.ground_truth_positive;
    }
  }
  report.predicted_positive = report.entries.size();
  for (const TriageEntry& entry : report.entries) {
    auto it = ground_truth->find(entry.callee);
    if (it != ground_truth->end() &&
        std::string_view(it->second).starts_with(prefix)) {
      ++report.true_positives;
    }
  }
  if (report.predicted_positive > 0) {
    report.precision = static_cast<double>(report.true_positives) /
                       static_cast<double>(report.predicted_positive);
  }
  if (report.ground_truth_positive > 0) {
    report.recall = static_cast<double>(report.true_positives) /
                    static_cast<double>(report.ground_truth_positive);
  }
  if (report.precision && report.recall && *report.precision + *report.recall > 0) {
    report.f1 = 2.0 * *report.precision * *report.recall /
                (*report.precision + *report.recall);
  }
  return report;
}

std::string render_text(const TriageReport& report) {
  std::ostringstream out;
  out << "triage prefix '" << report.prefix << "': " << report.entries.size()
      << " predicted\n";
  for (const TriageEntry& entry : report.entries) {
    out << "  " << entry.callee << " <- " << entry.signature
        << " (weight " << entry.weight << ")\n";
  }
  if (report.has_ground_truth) {
    out << "ground truth positives: " << report.ground_truth_positive << "\n";
    out << "true positives: " << report.true_positives << "\n";
    auto fmt = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) : std::string("undefined");
    };
    out << "precision: " << fmt(report.precision)
        << "  recall: " << fmt(report.recall) << "  f1: " << fmt(report.f1)
        << "\n";
  }
  return out.str();
}

std::map<std::string, std::string> callee_ground_truth(const Corpus& corpus) {
  std::map<std::string, std::string> truth;
  for (const AnnotatedFunction& fn : corpus.functions) {
    for (const auto& [callee, signature] : fn.call_annotations) {
      truth.emplace(callee, signature);  // first annotation wins
    }
  }
  return truth;
}

namespace {
using json = nlohmann::ordered_json;
}

std::string function_prediction_to_json(const FunctionPrediction& prediction) {
  json record;
  record["callee"] = prediction.callee;
  record["signature"] = prediction.signature;
  record["weight"] = prediction.weight;
  record["contexts"] = prediction.contributing_contexts;
  record["sites"] = prediction.site_count;
  return record.dump();
}

FunctionPrediction function_prediction_from_json(std::string_view line) {
  json record = json::parse(line);
  FunctionPrediction prediction;
  prediction.callee = record.at("callee").get<std::string>();
  prediction.signature = record.at("signature").get<std::string>();
  prediction.weight = record.at("weight").get<double>();
  prediction.contributing_contexts = record.at("contexts").get<std::uint32_t>();
  prediction.site_count = record.at("sites").get<std::uint32_t>();
  return prediction;
}

std::vector<FunctionPrediction> load_function_predictions(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<FunctionPrediction> predictions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      predictions.push_back(function_prediction_from_json(line));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": parse error: " + e.what());
    }
  }
  return predictions;
}

void save_function_predictions(std::span<const FunctionPrediction> predictions,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const FunctionPrediction& prediction : predictions) {
    out << function_prediction_to_json(prediction) << "\n";
  }
}

}  // namespace typrec
