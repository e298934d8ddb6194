#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "typrec/engine.hpp"
#include "typrec/ngramdb.hpp"

namespace typrec {

// Local signature prediction for a single call site.
struct CallSitePrediction {
  std::string binary_id;
  std::uint64_t function_address = 0;  // caller
  std::uint32_t token_index = 0;       // callee token position in the caller
  std::string callee;                  // callee identifier, possibly synthetic
  std::vector<Candidate> candidates;
  std::optional<std::string> signature;  // absent iff abstained
  double c_norm = 0.0;
  std::optional<double> calibrated;
  bool abstained = true;

  double confidence() const { return calibrated.value_or(c_norm); }
};

struct SignatureVote {
  std::string signature;
  double weight = 0.0;
  std::uint32_t sites = 0;
};

// Binary-wide aggregated prediction for one callee.
struct FunctionPrediction {
  std::string callee;
  std::string signature;
  double weight = 0.0;                       // winning vote weight
  std::uint32_t contributing_contexts = 0;   // sites choosing the winner
  std::uint32_t site_count = 0;              // all surviving sites for callee
  std::vector<SignatureVote> votes;
};

// Same mechanics as the type ensemble build, but indexing call contexts
// (full argument list plus n tokens each side) against signature labels.
DatabaseEnsemble build_signature_database(const Corpus& corpus,
                                          std::span<const std::uint32_t> portfolio,
                                          Bitness bitness, unsigned threads = 1,
                                          BuildCounters* counters = nullptr);

// One prediction per detected call site, scored and thresholded exactly like
// variable inference. The ensemble must hold the signature vocabulary.
std::vector<CallSitePrediction> infer_call_sites(const AnnotatedFunction& function,
                                                 const DatabaseEnsemble& ensemble,
                                                 const ScoringConfig& config,
                                                 Threshold tau = {},
                                                 const CalibrationMap* calibration = nullptr);

// Per callee: drops abstained and below-threshold sites, then for each
// candidate signature weight = (sum of confidences of sites choosing it)
// x (number of such sites); emits the argmax. Ties break by higher site
// count, then signature name ascending. Callees with no surviving sites
// emit nothing. Output is ordered by callee and independent of input order.
std::vector<FunctionPrediction> aggregate_by_address(
    std::span<const CallSitePrediction> sites, Threshold tau = {});

struct TriageEntry {
  std::string callee;
  std::string signature;
  double weight = 0.0;
};

struct TriageReport {
  std::string prefix;
  std::vector<TriageEntry> entries;  // weight descending
  bool has_ground_truth = false;
  std::size_t true_positives = 0;
  std::size_t predicted_positive = 0;
  std::size_t ground_truth_positive = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

// Lists predicted functions whose signature name starts with `prefix`.
// With ground truth (callee -> true signature name), also reports
// precision/recall/F1 of prefix membership.
TriageReport triage_report(std::span<const FunctionPrediction> predictions,
                           std::string_view prefix,
                           const std::map<std::string, std::string>* ground_truth = nullptr);

std::string render_text(const TriageReport& report);

// Ground-truth callee -> signature map assembled from corpus call annotations.
std::map<std::string, std::string> callee_ground_truth(const Corpus& corpus);

// JSONL I/O for aggregated function predictions.
std::string function_prediction_to_json(const FunctionPrediction& prediction);
FunctionPrediction function_prediction_from_json(std::string_view line);
std::vector<FunctionPrediction> load_function_predictions(const std::filesystem::path& path);
void save_function_predictions(std::span<const FunctionPrediction> predictions,
                               const std::filesystem::path& path);

}  // namespace typrec
