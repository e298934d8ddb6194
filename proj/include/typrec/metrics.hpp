#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "typrec/common.hpp"
#include "typrec/corpus.hpp"
#include "typrec/engine.hpp"

namespace typrec {

// One scored prediction joined with its ground truth.
struct EvalRecord {
  Prediction prediction;
  std::string ground_truth_name;
  TypeLabel ground_truth;
  Bitness bitness = Bitness::Bits64;
  std::optional<std::string> opt_level;
  bool in_train = false;  // exact normalized-stream hash occurs in train split

  bool correct() const {
    return !prediction.abstained && prediction.label == ground_truth_name;
  }
  double confidence() const { return prediction.confidence(); }
};

// Joins predictions against corpus annotations; `in_train` is computed from
// the train split's stream hashes. Unresolvable predictions are skipped and
// counted in *skipped.
std::vector<EvalRecord> build_eval_records(std::span<const Prediction> predictions,
                                           const Corpus& corpus,
                                           std::size_t* skipped = nullptr);

struct AccuracyReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t in_train_total = 0;
  std::size_t in_train_correct = 0;
  double overall = 0.0;
  std::optional<double> in_train;
  std::optional<double> out_train;
};

// Non-selective accuracy: abstentions count as incorrect. Throws InputError
// on empty input.
AccuracyReport overall_accuracy(std::span<const EvalRecord> records);

struct SelectiveReport {
  Threshold tau;
  std::size_t total = 0;
  std::size_t kept = 0;           // K_t
  std::size_t correct_kept = 0;   // C_t
  double coverage = 0.0;          // K_t / total
  std::optional<double> var_risk;     // (K_t - C_t) / K_t, absent when K_t = 0
  std::size_t struct_kept = 0;
  std::size_t struct_correct = 0;
  std::optional<double> struct_risk;  // risk over struct-kind ground truth
};

SelectiveReport selective_metrics(std::span<const EvalRecord> records, Threshold tau);

struct PrfReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

// Positive class on both sides is {struct, pointer_to_struct}; a prediction
// counts positive iff its label resolves to a struct-kind entry. Abstentions
// on positive ground truth are false negatives.
PrfReport struct_identification(std::span<const EvalRecord> records,
                                const TypeLibrary& types);

struct GroupedPrf {
  std::vector<std::pair<std::string, PrfReport>> groups;
  PrfReport macro;  // unweighted mean over groups with defined values
};

GroupedPrf struct_identification_by_binary(std::span<const EvalRecord> records,
                                           const TypeLibrary& types);
GroupedPrf struct_identification_by_opt_level(std::span<const EvalRecord> records,
                                              const TypeLibrary& types);

struct LayoutReport {
  std::size_t evaluated = 0;  // records with struct ground truth and struct prediction
  std::size_t skipped = 0;    // unresolvable layouts
  std::size_t full_matches = 0;
  std::optional<double> precision;  // macro over evaluated variables
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> full_match_accuracy;
};

// Field-level recovery on (offset, width) pairs for records where both the
// ground truth and the prediction are struct-kind; pointer-to-struct labels
// carry the pointee layout. TP = pairs present on both sides, FP = predicted
// pairs absent from ground truth (including wrong width at a true offset),
// FN = ground-truth pairs not predicted. Micro per variable, macro-averaged.
LayoutReport layout_recovery(std::span<const EvalRecord> records,
                             const TypeLibrary& types);

// One selective report per threshold, in grid order.
std::vector<SelectiveReport> coverage_risk_curve(std::span<const EvalRecord> records,
                                                 std::span<const Threshold> grid);

std::string render_text(const AccuracyReport& report);
std::string render_text(const SelectiveReport& report);
std::string render_text(const PrfReport& report, std::string_view title);
std::string render_text(const GroupedPrf& report, std::string_view title);
std::string render_text(const LayoutReport& report);
std::string render_text(std::span<const SelectiveReport> curve);

void write_coverage_csv(std::ostream& out, std::span<const SelectiveReport> curve);

// Machine-readable aggregate of all eval reports.
std::string reports_to_json(const AccuracyReport& accuracy,
                            std::span<const SelectiveReport> curve,
                            const PrfReport& struct_id,
                            const GroupedPrf& struct_id_by_binary,
                            const LayoutReport& layout);

}  // namespace typrec
