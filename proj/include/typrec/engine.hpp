#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "typrec/calibrate.hpp"
#include "typrec/common.hpp"
#include "typrec/corpus.hpp"
#include "typrec/lexer.hpp"
#include "typrec/ngramdb.hpp"

namespace typrec {

struct ScoringConfig {
  std::uint32_t k = 3;
  // Window-size weight is (n / n_max)^weight_exponent.
  double weight_exponent = 1.0;
  bool struct_priority = true;
  double struct_priority_margin = 0.05;  // relative score margin, in [0, 1)
  std::uint32_t min_contexts = 1;

  void validate() const;  // throws InputError on out-of-range values
};

// One database hit for one (occurrence, window size) query.
struct ContextMatch {
  std::uint32_t occurrence_index = 0;
  std::uint32_t n = 0;
  std::uint32_t count = 0;                // stored occurrence count
  std::uint32_t distinct_label_count = 1; // labels under the key
  bool in_top_k = true;
};

// Matches grouped per candidate label. Vectors are kept in collection order
// (occurrence ascending, then window size ascending); scoring sums in that
// order, which keeps results bit-reproducible.
struct MatchEvidence {
  std::unordered_map<std::uint32_t, std::vector<ContextMatch>> by_label;
};

struct Candidate {
  std::uint32_t label_id = 0;
  std::string name;
  double raw_score = 0.0;
  std::uint32_t matched_context_count = 0;  // M for this candidate
  std::vector<double> contributions;        // each in [0.5, 1.0]
};

struct Prediction {
  std::string binary_id;
  std::uint64_t address = 0;
  std::string identifier;
  std::vector<Candidate> candidates;  // ranked
  std::optional<std::string> label;   // absent iff abstained
  double raw_score = 0.0;
  double c_norm = 0.0;
  std::optional<double> calibrated;
  bool abstained = true;

  // Value thresholds compare against: calibrated when present, else c_norm.
  double confidence() const { return calibrated.value_or(c_norm); }
};

// Per-context score in [0.5, 1.0]:
//   0.5 + 0.5 * (n / n_max)^weight_exponent * (1 / distinct_label_count).
// Monotone increasing in n, decreasing in the label diversity of the key.
double context_contribution(std::uint32_t n, std::uint32_t n_max,
                            std::uint32_t distinct_label_count,
                            double weight_exponent = 1.0);

// Raw score per candidate is the sum of contributions over its in-top-k
// matches; ranking is score descending, then global label frequency
// descending, then name ascending.
std::vector<Candidate> score_candidates(const MatchEvidence& evidence,
                                        const ScoringConfig& config,
                                        std::uint32_t n_max,
                                        std::span<const std::uint64_t> label_frequencies,
                                        std::span<const std::string> label_names);

// (s* - B) / (M - B) with B = M/2, clamped to [0, 1]; 0 whenever the guards
// (M > 0, M > B, s* > B) fail.
double normalize_confidence(double s_star, std::uint32_t matched_contexts);

// If the top candidate is not struct-kind and some struct-kind candidate
// scores >= (1 - margin) * top score, promotes the best such candidate to
// rank 1. Only reorders; never adds or removes labels.
void apply_struct_priority(std::vector<Candidate>& ranked, const TypeLibrary& types,
                           Bitness bitness, double margin);

// Per-variable and per-function inference against a shared immutable
// ensemble. Const methods are safe to call concurrently.
class InferenceEngine {
 public:
  // `types` may be null (disables struct priority lookups).
  InferenceEngine(const DatabaseEnsemble& ensemble, const TypeLibrary* types,
                  ScoringConfig config);

  Prediction infer_variable(const AnnotatedFunction& function,
                            std::string_view identifier, Threshold tau = {},
                            const CalibrationMap* calibration = nullptr) const;
  Prediction infer_variable(const AnnotatedFunction& function,
                            const TokenStream& stream, std::string_view identifier,
                            Threshold tau = {},
                            const CalibrationMap* calibration = nullptr) const;

  // One prediction per identifier that is not classified as a call site
  // (an identifier is a call site when any of its occurrences is directly
  // followed by an argument list). Output ordered by first occurrence.
  std::vector<Prediction> infer_function(const AnnotatedFunction& function,
                                         Threshold tau = {},
                                         const CalibrationMap* calibration = nullptr) const;

  // Raw-code entry points for callers without corpus records.
  Prediction infer_variable_in_code(std::string_view code, Bitness bitness,
                                    std::string_view identifier, Threshold tau = {},
                                    const CalibrationMap* calibration = nullptr) const;
  std::vector<Prediction> infer_code(std::string_view code, Bitness bitness,
                                     Threshold tau = {},
                                     const CalibrationMap* calibration = nullptr) const;

  MatchEvidence collect_variable_evidence(const TokenStream& stream,
                                          std::string_view identifier) const;

  const ScoringConfig& config() const { return config_; }
  const DatabaseEnsemble& ensemble() const { return *ensemble_; }

 private:
  Prediction finish(std::string binary_id, std::uint64_t address,
                    std::string identifier, MatchEvidence evidence,
                    Bitness bitness, Threshold tau,
                    const CalibrationMap* calibration) const;

  const DatabaseEnsemble* ensemble_;
  const TypeLibrary* types_;
  ScoringConfig config_;
};

// Calibration-set assembly: one pair per non-abstained prediction whose
// (binary_id, address, identifier) resolves in the corpus; `correct` is
// exact fully-qualified-name equality. Unresolvable predictions are skipped
// and counted.
struct PairCollection {
  std::vector<CalibrationPair> pairs;
  std::size_t skipped = 0;
};
PairCollection collect_calibration_pairs(std::span<const Prediction> predictions,
                                         const Corpus& corpus);

// Keeps non-abstained predictions passing the threshold gate.
std::vector<Prediction> threshold_filter(std::span<const Prediction> predictions,
                                         Threshold tau);

// JSONL record I/O for prediction files.
std::string prediction_to_json(const Prediction& prediction, std::uint32_t top_k);
Prediction prediction_from_json(std::string_view line);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void save_predictions(std::span<const Prediction> predictions,
                      const std::filesystem::path& path, std::uint32_t top_k);

}  // namespace typrec
