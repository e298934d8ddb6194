#include "typrec/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "typrec/lexer.hpp"

namespace typrec {

namespace {

std::optional<double> ratio(std::size_t numerator, std::size_t denominator) {
  if (denominator == 0) return std::nullopt;
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::optional<double> f1_of(const std::optional<double>& p,
                            const std::optional<double>& r) {
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0.0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

std::string fmt(const std::optional<double>& value, int precision = 4) {
  if (!value) return "undefined";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << *value;
  return out.str();
}

std::string fmt_tau(Threshold tau) {
  if (!tau) return "none";
  std::ostringstream out;
  out << *tau;
  return out.str();
}

}  // namespace

std::vector<EvalRecord> build_eval_records(std::span<const Prediction> predictions,
                                           const Corpus& corpus,
                                           std::size_t* skipped) {
  std::map<std::pair<std::string_view, std::uint64_t>, const AnnotatedFunction*>
      functions;
  std::unordered_set<NGramKey> train_hashes;
  std::map<std::pair<std::string_view, std::uint64_t>, NGramKey> hashes;
  for (const AnnotatedFunction& fn : corpus.functions) {
    NGramKey hash = stream_hash(tokenize(fn.source_text));
    functions[{fn.binary_id, fn.address}] = &fn;
    hashes[{fn.binary_id, fn.address}] = hash;
    if (fn.split == Split::Train) train_hashes.insert(hash);
  }

  std::size_t skip_count = 0;
  std::vector<EvalRecord> records;
  records.reserve(predictions.size());
  for (const Prediction& prediction : predictions) {
    auto key = std::make_pair(std::string_view(prediction.binary_id),
                              prediction.address);
    auto fn_it = functions.find(key);
    if (fn_it == functions.end()) {
      ++skip_count;
      continue;
    }
    const AnnotatedFunction& fn = *fn_it->second;
    auto annotation = fn.variable_annotations.find(prediction.identifier);
    if (annotation == fn.variable_annotations.end()) {
      ++skip_count;
      continue;
    }
    const TypeLabel* label =
        corpus.type_library.find(annotation->second, fn.bitness);
    if (label == nullptr) {
      ++skip_count;
      continue;
    }
    EvalRecord record;
    record.prediction = prediction;
    record.ground_truth_name = annotation->second;
    record.ground_truth = *label;
    record.bitness = fn.bitness;
    record.opt_level = fn.opt_level;
    record.in_train = train_hashes.contains(hashes.at(key));
    records.push_back(std::move(record));
  }
  if (skipped) *skipped = skip_count;
  return records;
}

AccuracyReport overall_accuracy(std::span<const EvalRecord> records) {
  if (records.empty()) {
    throw InputError("accuracy requires at least one record");
  }
  AccuracyReport report;
  report.total = records.size();
  for (const EvalRecord& record : records) {
    bool correct = record.correct();
    report.correct += correct ? 1 : 0;
    if (record.in_train) {
      ++report.in_train_total;
      report.in_train_correct += correct ? 1 : 0;
    }
  }
  report.overall =
      static_cast<double>(report.correct) / static_cast<double>(report.total);
  report.in_train = ratio(report.in_train_correct, report.in_train_total);
  report.out_train = ratio(report.correct - report.in_train_correct,
                           report.total - report.in_train_total);
  return report;
}

SelectiveReport selective_metrics(std::span<const EvalRecord> records,
                                  Threshold tau) {
  SelectiveReport report;
  report.tau = tau;
  report.total = records.size();
  for (const EvalRecord& record : records) {
    if (record.prediction.abstained) continue;
    if (!passes_threshold(record.confidence(), tau)) continue;
    bool correct = record.correct();
    ++report.kept;
    report.correct_kept += correct ? 1 : 0;
    if (is_struct_kind(record.ground_truth.kind)) {
      ++report.struct_kept;
      report.struct_correct += correct ? 1 : 0;
    }
  }
  report.coverage = report.total == 0
                        ? 0.0
                        : static_cast<double>(report.kept) /
                              static_cast<double>(report.total);
  if (report.kept > 0) {
    report.var_risk = static_cast<double>(report.kept - report.correct_kept) /
                      static_cast<double>(report.kept);
  }
  if (report.struct_kept > 0) {
    report.struct_risk =
        static_cast<double>(report.struct_kept - report.struct_correct) /
        static_cast<double>(report.struct_kept);
  }
  return report;
}

namespace {

bool predicted_struct_kind(const EvalRecord& record, const TypeLibrary& types) {
  if (record.prediction.abstained || !record.prediction.label) return false;
  const TypeLabel* label = types.find(*record.prediction.label, record.bitness);
  return label != nullptr && is_struct_kind(label->kind);
}

PrfReport finish_prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrfReport report;
  report.tp = tp;
  report.fp = fp;
  report.fn = fn;
  report.precision = ratio(tp, tp + fp);
  report.recall = ratio(tp, tp + fn);
  report.f1 = f1_of(report.precision, report.recall);
  return report;
}

}  // namespace

PrfReport struct_identification(std::span<const EvalRecord> records,
                                const TypeLibrary& types) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (const EvalRecord& record : records) {
    bool truth_positive = is_struct_kind(record.ground_truth.kind);
    bool predicted_positive = predicted_struct_kind(record, types);
    if (truth_positive && predicted_positive) {
      ++tp;
    } else if (predicted_positive) {
      ++fp;
    } else if (truth_positive) {
      ++fn;  // includes abstentions on struct ground truth
    }
  }
  return finish_prf(tp, fp, fn);
}

namespace {

GroupedPrf grouped_struct_identification(
    std::span<const EvalRecord> records, const TypeLibrary& types,
    const std::function<std::string(const EvalRecord&)>& key_of) {
  std::map<std::string, std::vector<const EvalRecord*>> groups;
  for (const EvalRecord& record : records) {
    groups[key_of(record)].push_back(&record);
  }
  GroupedPrf result;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  std::size_t p_count = 0, r_count = 0, f_count = 0;
  for (const auto& [key, members] : groups) {
    std::vector<EvalRecord> copy;
    copy.reserve(members.size());
    for (const EvalRecord* record : members) copy.push_back(*record);
    PrfReport report = struct_identification(copy, types);
    result.macro.tp += report.tp;
    result.macro.fp += report.fp;
    result.macro.fn += report.fn;
    if (report.precision) { p_sum += *report.precision; ++p_count; }
    if (report.recall) { r_sum += *report.recall; ++r_count; }
    if (report.f1) { f_sum += *report.f1; ++f_count; }
    result.groups.emplace_back(key, std::move(report));
  }
  if (p_count > 0) result.macro.precision = p_sum / static_cast<double>(p_count);
  if (r_count > 0) result.macro.recall = r_sum / static_cast<double>(r_count);
  if (f_count > 0) result.macro.f1 = f_sum / static_cast<double>(f_count);
  return result;
}

}  // namespace

GroupedPrf struct_identification_by_binary(std::span<const EvalRecord> records,
                                           const TypeLibrary& types) {
  return grouped_struct_identification(
      records, types,
      [](const EvalRecord& record) { return record.prediction.binary_id; });
}

GroupedPrf struct_identification_by_opt_level(std::span<const EvalRecord> records,
                                              const TypeLibrary& types) {
  return grouped_struct_identification(
      records, types, [](const EvalRecord& record) {
        return record.opt_level.value_or("unknown");
      });
}

namespace {

using LayoutPairs = std::set<std::pair<std::uint32_t, std::uint32_t>>;

std::optional<LayoutPairs> layout_pairs(const TypeLabel& label) {
  if (!is_struct_kind(label.kind) || !label.layout) return std::nullopt;
  LayoutPairs pairs;
  for (const TypeLayoutField& field : label.layout->fields) {
    pairs.emplace(field.offset, field.width);
  }
  return pairs;
}

}  // namespace

LayoutReport layout_recovery(std::span<const EvalRecord> records,
                             const TypeLibrary& types) {
  LayoutReport report;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  std::size_t p_count = 0, r_count = 0, f_count = 0;
  for (const EvalRecord& record : records) {
    if (!is_struct_kind(record.ground_truth.kind)) continue;
    if (record.prediction.abstained || !record.prediction.label) continue;
    const TypeLabel* predicted =
        types.find(*record.prediction.label, record.bitness);
    if (predicted == nullptr || !is_struct_kind(predicted->kind)) continue;

    auto truth_pairs = layout_pairs(record.ground_truth);
    auto predicted_pairs = layout_pairs(*predicted);
    if (!truth_pairs || !predicted_pairs) {
      ++report.skipped;
      continue;
    }
    ++report.evaluated;
    std::size_t tp = 0;
    for (const auto& pair : *predicted_pairs) {
      tp += truth_pairs->contains(pair) ? 1 : 0;
    }
    std::size_t fp = predicted_pairs->size() - tp;
    std::size_t fn = truth_pairs->size() - tp;
    auto p = ratio(tp, tp + fp);
    auto r = ratio(tp, tp + fn);
    auto f = f1_of(p, r);
    if (p) { p_sum += *p; ++p_count; }
    if (r) { r_sum += *r; ++r_count; }
    if (f) { f_sum += *f; ++f_count; }
    if (*predicted_pairs == *truth_pairs) ++report.full_matches;
  }
  if (p_count > 0) report.precision = p_sum / static_cast<double>(p_count);
  if (r_count > 0) report.recall = r_sum / static_cast<double>(r_count);
  if (f_count > 0) report.f1 = f_sum / static_cast<double>(f_count);
  report.full_match_accuracy = ratio(report.full_matches, report.evaluated);
  return report;
}

std::vector<SelectiveReport> coverage_risk_curve(std::span<const EvalRecord> records,
                                                 std::span<const Threshold> grid) {
  std::vector<SelectiveReport> curve;
  curve.reserve(grid.size());
  for (Threshold tau : grid) {
    curve.push_back(selective_metrics(records, tau));
  }
  return curve;
}

std::string render_text(const AccuracyReport& report) {
  std::ostringstream out;
  out << "overall accuracy: " << fmt(report.overall) << " (" << report.correct
      << "/" << report.total << ")\n";
  out << "in-train accuracy: " << fmt(report.in_train) << " ("
      << report.in_train_correct << "/" << report.in_train_total << ")\n";
  out << "out-of-train accuracy: " << fmt(report.out_train) << " ("
      << (report.correct - report.in_train_correct) << "/"
      << (report.total - report.in_train_total) << ")\n";
  return out.str();
}

std::string render_text(const SelectiveReport& report) {
  std::ostringstream out;
  out << "tau=" << fmt_tau(report.tau) << " coverage=" << fmt(report.coverage)
      << " kept=" << report.kept << "/" << report.total
      << " var_risk=" << fmt(report.var_risk)
      << " struct_risk=" << fmt(report.struct_risk) << "\n";
  return out.str();
}

std::string render_text(const PrfReport& report, std::string_view title) {
  std::ostringstream out;
  out << title << ": P=" << fmt(report.precision) << " R=" << fmt(report.recall)
      << " F1=" << fmt(report.f1) << " (tp=" << report.tp << " fp=" << report.fp
      << " fn=" << report.fn << ")\n";
  return out.str();
}

std::string render_text(const GroupedPrf& report, std::string_view title) {
  std::ostringstream out;
  out << title << " (macro): P=" << fmt(report.macro.precision)
      << " R=" << fmt(report.macro.recall) << " F1=" << fmt(report.macro.f1)
      << "\n";
  for (const auto& [group, prf] : report.groups) {
    out << "  " << std::left << std::setw(16) << group
        << " P=" << fmt(prf.precision) << " R=" << fmt(prf.recall)
        << " F1=" << fmt(prf.f1) << "\n";
  }
  return out.str();
}

std::string render_text(const LayoutReport& report) {
  std::ostringstream out;
  out << "layout recovery: P=" << fmt(report.precision)
      << " R=" << fmt(report.recall) << " F1=" << fmt(report.f1)
      << " full_match=" << fmt(report.full_match_accuracy) << " ("
      << report.full_matches << "/" << report.evaluated << ", skipped "
      << report.skipped << ")\n";
  return out.str();
}

std::string render_text(std::span<const SelectiveReport> curve) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "tau" << std::setw(12) << "coverage"
      << std::setw(12) << "kept" << std::setw(12) << "var_risk"
      << std::setw(12) << "struct_risk" << "\n";
  for (const SelectiveReport& report : curve) {
    out << std::left << std::setw(8) << fmt_tau(report.tau) << std::setw(12)
        << fmt(report.coverage) << std::setw(12) << report.kept << std::setw(12)
        << fmt(report.var_risk) << std::setw(12) << fmt(report.struct_risk)
        << "\n";
  }
  return out.str();
}

void write_coverage_csv(std::ostream& out, std::span<const SelectiveReport> curve) {
  out << "tau,total,kept,correct_kept,coverage,var_risk,struct_risk\n";
  for (const SelectiveReport& report : curve) {
    auto cell = [](const std::optional<double>& value) {
      return value ? std::to_string(*value) : std::string("NA");
    };
    out << fmt_tau(report.tau) << "," << report.total << "," << report.kept
        << "," << report.correct_kept << "," << report.coverage << ","
        << cell(report.var_risk) << "," << cell(report.struct_risk) << "\n";
  }
}

namespace {

nlohmann::ordered_json prf_to_json(const PrfReport& report) {
  nlohmann::ordered_json doc;
  doc["tp"] = report.tp;
  doc["fp"] = report.fp;
  doc["fn"] = report.fn;
  doc["precision"] = report.precision ? nlohmann::ordered_json(*report.precision)
                                      : nlohmann::ordered_json(nullptr);
  doc["recall"] = report.recall ? nlohmann::ordered_json(*report.recall)
                                : nlohmann::ordered_json(nullptr);
  doc["f1"] = report.f1 ? nlohmann::ordered_json(*report.f1)
                        : nlohmann::ordered_json(nullptr);
  return doc;
}

nlohmann::ordered_json selective_to_json(const SelectiveReport& report) {
  nlohmann::ordered_json doc;
  doc["tau"] = report.tau ? nlohmann::ordered_json(*report.tau)
                          : nlohmann::ordered_json(nullptr);
  doc["total"] = report.total;
  doc["kept"] = report.kept;
  doc["correct_kept"] = report.correct_kept;
  doc["coverage"] = report.coverage;
  doc["var_risk"] = report.var_risk ? nlohmann::ordered_json(*report.var_risk)
                                    : nlohmann::ordered_json(nullptr);
  doc["struct_risk"] = report.struct_risk
                           ? nlohmann::ordered_json(*report.struct_risk)
                           : nlohmann::ordered_json(nullptr);
  return doc;
}

}  // namespace

std::string reports_to_json(const AccuracyReport& accuracy,
                            std::span<const SelectiveReport> curve,
                            const PrfReport& struct_id,
                            const GroupedPrf& struct_id_by_binary,
                            const LayoutReport& layout) {
  nlohmann::ordered_json doc;
  doc["accuracy"] = {
      {"total", accuracy.total},
      {"correct", accuracy.correct},
      {"overall", accuracy.overall},
      {"in_train", accuracy.in_train ? nlohmann::ordered_json(*accuracy.in_train)
                                     : nlohmann::ordered_json(nullptr)},
      {"out_train", accuracy.out_train
                        ? nlohmann::ordered_json(*accuracy.out_train)
                        : nlohmann::ordered_json(nullptr)},
  };
  nlohmann::ordered_json curve_json = nlohmann::ordered_json::array();
  for (const SelectiveReport& report : curve) {
    curve_json.push_back(selective_to_json(report));
  }
  doc["coverage_risk"] = curve_json;
  doc["struct_identification"] = prf_to_json(struct_id);
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (const auto& [group, prf] : struct_id_by_binary.groups) {
    groups[group] = prf_to_json(prf);
  }
  doc["struct_identification_by_binary"] = {
      {"macro", prf_to_json(struct_id_by_binary.macro)},
      {"groups", groups},
  };
  doc["layout_recovery"] = {
      {"evaluated", layout.evaluated},
      {"skipped", layout.skipped},
      {"full_matches", layout.full_matches},
      {"precision", layout.precision ? nlohmann::ordered_json(*layout.precision)
                                     : nlohmann::ordered_json(nullptr)},
      {"recall", layout.recall ? nlohmann::ordered_json(*layout.recall)
                               : nlohmann::ordered_json(nullptr)},
      {"f1", layout.f1 ? nlohmann::ordered_json(*layout.f1)
                       : nlohmann::ordered_json(nullptr)},
      {"full_match_accuracy",
       layout.full_match_accuracy
           ? nlohmann::ordered_json(*layout.full_match_accuracy)
           : nlohmann::ordered_json(nullptr)},
  };
  return doc.dump(2);
}

}  // namespace typrec
