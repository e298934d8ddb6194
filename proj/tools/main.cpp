#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "typrec/calibrate.hpp"
#include "typrec/corpus.hpp"
#include "typrec/engine.hpp"
#include "typrec/metrics.hpp"
#include "typrec/ngramdb.hpp"
#include "typrec/signatures.hpp"

namespace {

using namespace typrec;

struct CommonPaths {
  std::string corpus;
  std::string types;
  std::string signatures;
};

Corpus load(const CommonPaths& paths) {
  std::optional<std::filesystem::path> signature_path;
  if (!paths.signatures.empty()) signature_path = paths.signatures;
  return load_corpus(paths.corpus, paths.types, signature_path);
}

void add_common(CLI::App* cmd, CommonPaths& paths, bool signatures_required) {
  cmd->add_option("--corpus", paths.corpus, "corpus file (JSONL)")->required();
  cmd->add_option("--types", paths.types, "type library (JSON)")->required();
  auto* sig = cmd->add_option("--signatures", paths.signatures,
                              "signature library (JSON)");
  if (signatures_required) sig->required();
}

std::vector<std::uint32_t> parse_portfolio(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream stream(text);
  std::string part;
  while (std::getline(stream, part, ',')) {
    if (part.empty()) continue;
    try {
      out.push_back(static_cast<std::uint32_t>(std::stoul(part)));
    } catch (const std::exception&) {
      throw InputError("invalid portfolio entry '" + part + "'");
    }
  }
  if (out.empty()) throw InputError("portfolio must not be empty");
  return out;
}

Threshold parse_tau(const std::string& text) {
  if (text.empty() || text == "none") return std::nullopt;
  try {
    double value = std::stod(text);
    if (value < 0.0 || value > 1.0) throw InputError("tau must lie in [0, 1]");
    return value;
  } catch (const InputError&) {
    throw;
  } catch (const std::exception&) {
    throw InputError("invalid tau '" + text + "'");
  }
}

std::vector<Threshold> parse_grid(const std::string& text) {
  std::vector<Threshold> grid;
  std::stringstream stream(text);
  std::string part;
  while (std::getline(stream, part, ',')) {
    if (!part.empty()) grid.push_back(parse_tau(part));
  }
  if (grid.empty()) throw InputError("threshold grid must not be empty");
  return grid;
}

std::optional<Split> parse_split_selector(const std::string& text) {
  if (text == "all") return std::nullopt;
  auto split = parse_split(text);
  if (!split) {
    throw InputError("split must be train, validation, test, or all");
  }
  return split;
}

std::vector<Bitness> train_bitnesses(const Corpus& corpus) {
  bool has32 = false;
  bool has64 = false;
  for (const AnnotatedFunction& fn : corpus.functions) {
    if (fn.split != Split::Train) continue;
    has32 |= fn.bitness == Bitness::Bits32;
    has64 |= fn.bitness == Bitness::Bits64;
  }
  std::vector<Bitness> out;
  if (has32) out.push_back(Bitness::Bits32);
  if (has64) out.push_back(Bitness::Bits64);
  if (out.empty()) throw InputError("corpus has no train-split functions");
  return out;
}

void print_stats(const NGramDatabase& db) {
  DbStats stats = db.stats();
  std::cout << "  n=" << db.n() << ": keys=" << stats.key_count
            << " labels=" << stats.label_count << " pairs=" << stats.pair_count
            << " disk_bytes=" << stats.on_disk_bytes
            << " resident_bytes=" << stats.resident_bytes
            << " mean_labels_per_key=" << stats.mean_labels_per_key << "\n";
}

std::filesystem::path manifest_name(const std::filesystem::path& dir,
                                    Vocabulary vocabulary, Bitness bitness) {
  return dir / ("manifest_" + std::string(to_string(vocabulary)) + "_" +
                std::string(to_string(bitness)) + ".json");
}

// Deterministic worker pool: items are claimed by index and results land in
// index order regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  unsigned spawn = std::min<unsigned>(threads, static_cast<unsigned>(count));
  for (unsigned t = 0; t < spawn; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& w : workers) w.join();
}

struct EnsembleSet {
  std::map<Bitness, DatabaseEnsemble> by_bitness;

  const DatabaseEnsemble& for_function(const AnnotatedFunction& fn) const {
    auto it = by_bitness.find(fn.bitness);
    if (it == by_bitness.end()) {
      throw InputError("no ensemble manifest covers " +
                       std::string(to_string(fn.bitness)) + "-bit function " +
                       fn.binary_id + "@" + address_to_hex(fn.address));
    }
    return it->second;
  }
};

EnsembleSet open_ensembles(const std::vector<std::string>& manifests,
                           Vocabulary expected) {
  EnsembleSet set;
  for (const std::string& path : manifests) {
    DatabaseEnsemble ensemble = DatabaseEnsemble::open(path);
    if (ensemble.vocabulary() != expected) {
      throw InputError(path + ": expected a " + std::string(to_string(expected)) +
                       " ensemble, found " +
                       std::string(to_string(ensemble.vocabulary())));
    }
    Bitness bitness = ensemble.bitness();
    if (!set.by_bitness.emplace(bitness, std::move(ensemble)).second) {
      throw InputError("duplicate manifest for " +
                       std::string(to_string(bitness)) + "-bit");
    }
  }
  return set;
}

struct ThroughputReport {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double functions_per_second = 0.0;
};

ThroughputReport summarize(std::vector<double> per_function_ms,
                           double wall_seconds) {
  ThroughputReport report;
  if (per_function_ms.empty()) return report;
  std::sort(per_function_ms.begin(), per_function_ms.end());
  report.median_ms = per_function_ms[per_function_ms.size() / 2];
  double total = 0.0;
  for (double ms : per_function_ms) total += ms;
  report.mean_ms = total / static_cast<double>(per_function_ms.size());
  report.functions_per_second =
      wall_seconds > 0.0
          ? static_cast<double>(per_function_ms.size()) / wall_seconds
          : 0.0;
  return report;
}

void print_throughput(const ThroughputReport& report) {
  std::cout << "throughput: " << report.functions_per_second
            << " functions/s | ms/function median " << report.median_ms
            << " mean " << report.mean_ms << " (ensemble open time excluded)\n";
}

int cmd_train(const CommonPaths& paths, const std::string& portfolio_text,
              const std::string& out_dir, unsigned threads,
              Vocabulary vocabulary) {
  Corpus corpus = load(paths);
  std::vector<std::uint32_t> portfolio = parse_portfolio(portfolio_text);
  std::filesystem::create_directories(out_dir);
  bool wrote_any = false;
  for (Bitness bitness : train_bitnesses(corpus)) {
    if (vocabulary == Vocabulary::Signatures) {
      bool any = false;
      for (const AnnotatedFunction& fn : corpus.functions) {
        any |= fn.split == Split::Train && fn.bitness == bitness &&
               !fn.call_annotations.empty();
      }
      if (!any) continue;
    }
    BuildCounters counters;
    DatabaseEnsemble ensemble =
        vocabulary == Vocabulary::Types
            ? DatabaseEnsemble::build(corpus, portfolio, bitness,
                                      Vocabulary::Types, threads, &counters)
            : build_signature_database(corpus, portfolio, bitness, threads,
                                       &counters);
    std::filesystem::path manifest = manifest_name(out_dir, vocabulary, bitness);
    ensemble.save(manifest);
    wrote_any = true;
    std::cout << "wrote " << manifest.string() << " ("
              << counters.indexed_occurrences << " occurrences indexed, "
              << counters.skipped_other_vocabulary + counters.skipped_unresolved
              << " skipped)\n";
    for (const NGramDatabase& db : ensemble.databases()) print_stats(db);
  }
  if (!wrote_any) {
    throw InputError("no ensembles produced: train split has no usable "
                     "annotations for this vocabulary");
  }
  return 0;
}

int cmd_infer(const CommonPaths& paths, const std::vector<std::string>& manifests,
              const std::string& out_path, const std::string& split_text,
              const std::string& tau_text, const ScoringConfig& config,
              const std::string& calibration_path, unsigned threads) {
  Corpus corpus = load(paths);
  EnsembleSet ensembles = open_ensembles(manifests, Vocabulary::Types);
  Threshold tau = parse_tau(tau_text);
  std::optional<Split> split = parse_split_selector(split_text);

  std::optional<CalibrationMap> calibration;
  if (!calibration_path.empty()) {
    calibration = CalibrationMap::load(calibration_path);
  }

  std::map<Bitness, InferenceEngine> engines;
  for (const auto& [bitness, ensemble] : ensembles.by_bitness) {
    engines.emplace(bitness,
                    InferenceEngine(ensemble, &corpus.type_library, config));
  }

  std::vector<const AnnotatedFunction*> selected;
  for (const AnnotatedFunction& fn : corpus.functions) {
    if (!split || fn.split == *split) selected.push_back(&fn);
  }
  for (const AnnotatedFunction* fn : selected) {
    ensembles.for_function(*fn);  // fail fast on uncovered bitness
  }

  std::vector<std::vector<Prediction>> results(selected.size());
  std::vector<double> per_function_ms(selected.size());
  auto wall_start = std::chrono::steady_clock::now();
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;
  parallel_for(selected.size(), threads, [&](std::size_t i) {
    if (failed.load()) return;
    try {
      auto start = std::chrono::steady_clock::now();
      const InferenceEngine& engine = engines.at(selected[i]->bitness);
      results[i] = engine.infer_function(*selected[i], tau,
                                         calibration ? &*calibration : nullptr);
      auto stop = std::chrono::steady_clock::now();
      per_function_ms[i] =
          std::chrono::duration<double, std::milli>(stop - start).count();
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      failure = e.what();
      failed.store(true);
    }
  });
  if (failed.load()) throw InputError(failure);
  double wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - wall_start)
                            .count();

  std::ofstream out(out_path);
  if (!out) throw InputError("cannot write " + out_path);
  std::size_t emitted = 0;
  for (const auto& predictions : results) {
    for (const Prediction& prediction : predictions) {
      out << prediction_to_json(prediction, config.k) << "\n";
      ++emitted;
    }
  }
  std::cout << "wrote " << emitted << " predictions for " << selected.size()
            << " functions to " << out_path << "\n";
  print_throughput(summarize(std::move(per_function_ms), wall_seconds));
  return 0;
}

int cmd_calibrate(const CommonPaths& paths, const std::string& predictions_path,
                  const std::string& out_path) {
  Corpus corpus = load(paths);
  std::vector<Prediction> predictions = load_predictions(predictions_path);
  PairCollection collection = collect_calibration_pairs(predictions, corpus);
  if (collection.pairs.empty()) {
    throw InputError("no calibration pairs: predictions do not resolve against "
                     "the corpus, or all predictions abstained");
  }
  CalibrationMap map = CalibrationMap::fit_isotonic(collection.pairs);
  map.save(out_path);
  std::cout << "fitted " << map.breakpoints().size() << " breakpoints from "
            << collection.pairs.size() << " pairs (" << collection.skipped
            << " skipped)\n";

  // Reliability summary: mean confidence vs. empirical accuracy per decile.
  std::cout << "decile  count  mean_score  accuracy\n";
  for (int d = 0; d < 10; ++d) {
    double lo = d / 10.0;
    double hi = (d + 1) / 10.0;
    std::size_t count = 0;
    double score_sum = 0.0;
    std::size_t correct = 0;
    for (const CalibrationPair& pair : collection.pairs) {
      bool in = pair.score >= lo && (d == 9 ? pair.score <= hi : pair.score < hi);
      if (!in) continue;
      ++count;
      score_sum += pair.score;
      correct += pair.correct ? 1 : 0;
    }
    std::cout << "[" << lo << "," << hi << (d == 9 ? "]" : ")") << "  " << count;
    if (count > 0) {
      std::cout << "  " << score_sum / static_cast<double>(count) << "  "
                << static_cast<double>(correct) / static_cast<double>(count);
    }
    std::cout << "\n";
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const CommonPaths& paths, const std::string& predictions_path,
             const std::string& out_dir, const std::string& grid_text) {
  Corpus corpus = load(paths);
  std::vector<Prediction> predictions = load_predictions(predictions_path);
  std::size_t skipped = 0;
  std::vector<EvalRecord> records =
      build_eval_records(predictions, corpus, &skipped);
  if (records.empty()) {
    throw InputError("no predictions resolved against corpus annotations");
  }
  std::vector<Threshold> grid = parse_grid(grid_text);

  AccuracyReport accuracy = overall_accuracy(records);
  auto curve = coverage_risk_curve(records, grid);
  PrfReport struct_id = struct_identification(records, corpus.type_library);
  GroupedPrf by_binary =
      struct_identification_by_binary(records, corpus.type_library);
  GroupedPrf by_opt =
      struct_identification_by_opt_level(records, corpus.type_library);
  LayoutReport layout = layout_recovery(records, corpus.type_library);

  std::cout << "evaluated " << records.size() << " predictions (" << skipped
            << " skipped)\n";
  std::cout << render_text(accuracy);
  std::cout << render_text(std::span<const SelectiveReport>(curve));
  std::cout << render_text(struct_id, "struct identification");
  std::cout << render_text(by_binary, "struct identification by binary");
  bool any_opt =
      std::any_of(records.begin(), records.end(),
                  [](const EvalRecord& r) { return r.opt_level.has_value(); });
  if (any_opt) {
    std::cout << render_text(by_opt, "struct identification by opt level");
  }
  std::cout << render_text(layout);

  std::filesystem::create_directories(out_dir);
  std::filesystem::path csv_path =
      std::filesystem::path(out_dir) / "coverage_risk.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw InputError("cannot write " + csv_path.string());
  write_coverage_csv(csv, curve);

  std::filesystem::path json_path =
      std::filesystem::path(out_dir) / "reports.json";
  std::ofstream json_out(json_path);
  if (!json_out) throw InputError("cannot write " + json_path.string());
  json_out << reports_to_json(accuracy, curve, struct_id, by_binary, layout)
           << "\n";
  std::cout << "wrote " << csv_path.string() << " and " << json_path.string()
            << "\n";
  return 0;
}

int cmd_fn_infer(const CommonPaths& paths,
                 const std::vector<std::string>& manifests,
                 const std::string& sites_path, const std::string& functions_path,
                 const std::string& split_text, const std::string& tau_text,
                 const ScoringConfig& config, unsigned threads) {
  Corpus corpus = load(paths);
  EnsembleSet ensembles = open_ensembles(manifests, Vocabulary::Signatures);
  Threshold tau = parse_tau(tau_text);
  std::optional<Split> split = parse_split_selector(split_text);

  std::vector<const AnnotatedFunction*> selected;
  for (const AnnotatedFunction& fn : corpus.functions) {
    if (!split || fn.split == *split) selected.push_back(&fn);
  }
  for (const AnnotatedFunction* fn : selected) ensembles.for_function(*fn);

  std::vector<std::vector<CallSitePrediction>> results(selected.size());
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;
  parallel_for(selected.size(), threads, [&](std::size_t i) {
    if (failed.load()) return;
    try {
      results[i] = infer_call_sites(
          *selected[i], ensembles.for_function(*selected[i]), config, tau);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      failure = e.what();
      failed.store(true);
    }
  });
  if (failed.load()) throw InputError(failure);

  // Aggregation is binary-wide: group surviving sites per binary.
  std::map<std::string, std::vector<CallSitePrediction>> by_binary;
  std::size_t total_sites = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    total_sites += results[i].size();
    auto& bucket = by_binary[selected[i]->binary_id];
    bucket.insert(bucket.end(), results[i].begin(), results[i].end());
  }

  std::ofstream sites_out(sites_path);
  if (!sites_out) throw InputError("cannot write " + sites_path);
  for (const auto& predictions : results) {
    for (const CallSitePrediction& site : predictions) {
      nlohmann::ordered_json record;
      record["binary_id"] = site.binary_id;
      record["address"] = address_to_hex(site.function_address);
      record["token_index"] = site.token_index;
      record["callee"] = site.callee;
      record["signature"] = site.signature
                                ? nlohmann::ordered_json(*site.signature)
                                : nlohmann::ordered_json(nullptr);
      record["confidence"] = site.c_norm;
      record["abstained"] = site.abstained;
      sites_out << record.dump() << "\n";
    }
  }

  std::ofstream fn_out(functions_path);
  if (!fn_out) throw InputError("cannot write " + functions_path);
  std::size_t emitted = 0;
  for (const auto& [binary_id, sites] : by_binary) {
    auto merged = aggregate_by_address(sites, tau);
    for (const FunctionPrediction& prediction : merged) {
      fn_out << function_prediction_to_json(prediction) << "\n";
      ++emitted;
    }
  }
  std::cout << "wrote " << total_sites << " call sites to " << sites_path
            << " and " << emitted << " function predictions to "
            << functions_path << "\n";
  return 0;
}

int cmd_fn_triage(const std::string& functions_path, const std::string& prefix,
                  const CommonPaths& paths) {
  auto predictions = load_function_predictions(functions_path);
  std::optional<std::map<std::string, std::string>> truth;
  if (!paths.corpus.empty()) {
    if (paths.types.empty()) {
      throw InputError("--types is required when --corpus is given");
    }
    Corpus corpus = load(paths);
    truth = callee_ground_truth(corpus);
  }
  TriageReport report =
      triage_report(predictions, prefix, truth ? &*truth : nullptr);
  std::cout << render_text(report);
  return 0;
}

int cmd_db_stats(const std::string& db_path, bool verify) {
  NGramDatabase db = NGramDatabase::open_mapped(db_path);
  std::cout << "database " << db_path << "\n";
  std::cout << "  n=" << db.n() << " bitness=" << to_string(db.bitness())
            << " vocabulary=" << to_string(db.vocabulary()) << "\n";
  print_stats(db);
  std::cout << "  checksum verified on open: "
            << (db.checksum_verified_on_open() ? "yes" : "deferred") << "\n";
  if (verify) {
    if (!db.verify_payload()) {
      std::cerr << "payload checksum mismatch\n";
      return 2;
    }
    std::cout << "  payload checksum: ok\n";
  }
  return 0;
}

int cmd_tokenize(const std::string& code, const std::string& input_path,
                 bool debug) {
  std::string source = code;
  if (!input_path.empty()) {
    std::ifstream in(input_path);
    if (!in) throw InputError("cannot open " + input_path);
    source.assign(std::istreambuf_iterator<char>(in), {});
  }
  TokenStream stream = tokenize(source);
  for (const Token& token : stream.tokens) {
    std::cout << token.text;
    if (debug) {
      const char* cls = "";
      switch (token.cls) {
        case TokenClass::Identifier: cls = "identifier"; break;
        case TokenClass::Keyword: cls = "keyword"; break;
        case TokenClass::Punctuation: cls = "punctuation"; break;
        case TokenClass::Operator: cls = "operator"; break;
        case TokenClass::NumberPlaceholder: cls = "number"; break;
        case TokenClass::StringPlaceholder: cls = "string"; break;
        case TokenClass::BoundarySentinel: cls = "sentinel"; break;
      }
      std::cout << "\t" << cls;
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"n-gram type and signature recovery for decompiled code"};
  app.require_subcommand(1);

  const char* env_config = std::getenv("TYPREC_CONFIG");
  app.set_config("--config", env_config ? env_config : "",
                 "configuration file (INI: [subcommand] sections, key=value)");
  app.allow_config_extras(true);

  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  auto* train = app.add_subcommand("train", "build type databases from a corpus");
  CommonPaths train_paths;
  std::string train_portfolio = "2,4,8,12,48";
  std::string train_out = "ensembles";
  add_common(train, train_paths, false);
  train->add_option("--portfolio", train_portfolio, "window sizes, ascending");
  train->add_option("--out", train_out, "output directory");
  train->add_option("--threads", threads, "build shards");

  auto* infer = app.add_subcommand("infer", "predict variable types");
  CommonPaths infer_paths;
  std::vector<std::string> infer_manifests;
  std::string infer_out = "predictions.jsonl";
  std::string infer_split = "all";
  std::string infer_tau = "none";
  std::string infer_calibration;
  ScoringConfig infer_config;
  bool no_struct_priority = false;
  add_common(infer, infer_paths, false);
  infer->add_option("--manifest", infer_manifests, "ensemble manifest(s)")
      ->required();
  infer->add_option("--out", infer_out, "predictions output (JSONL)");
  infer->add_option("--split", infer_split, "train|validation|test|all");
  infer->add_option("--tau", infer_tau, "confidence threshold or 'none'");
  infer->add_option("--k", infer_config.k, "top-k candidates per query");
  infer->add_flag("--no-struct-priority", no_struct_priority,
                  "disable the struct priority heuristic");
  infer->add_option("--margin", infer_config.struct_priority_margin,
                    "struct priority score margin");
  infer->add_option("--weight-exponent", infer_config.weight_exponent,
                    "window-size weight exponent");
  infer->add_option("--min-contexts", infer_config.min_contexts,
                    "minimum matched contexts to emit");
  infer->add_option("--calibration", infer_calibration, "calibration map file");
  infer->add_option("--threads", threads, "worker threads");

  auto* calibrate =
      app.add_subcommand("calibrate", "fit an isotonic calibration map");
  CommonPaths calibrate_paths;
  std::string calibrate_predictions;
  std::string calibrate_out = "calibration.json";
  add_common(calibrate, calibrate_paths, false);
  calibrate
      ->add_option("--predictions", calibrate_predictions,
                   "validation predictions (JSONL)")
      ->required();
  calibrate->add_option("--out", calibrate_out, "calibration map output");

  auto* eval =
      app.add_subcommand("eval", "score predictions against ground truth");
  CommonPaths eval_paths;
  std::string eval_predictions;
  std::string eval_out = "reports";
  std::string eval_grid = "none,0.40,0.65,0.90";
  add_common(eval, eval_paths, false);
  eval->add_option("--predictions", eval_predictions, "predictions (JSONL)")
      ->required();
  eval->add_option("--out-dir", eval_out, "report output directory");
  eval->add_option("--grid", eval_grid, "threshold grid (comma separated)");

  auto* fn = app.add_subcommand("fn", "function signature workflows");
  fn->require_subcommand(1);

  auto* fn_train = fn->add_subcommand("train", "build signature databases");
  CommonPaths fn_train_paths;
  std::string fn_train_portfolio = "2,4,8,12,48";
  std::string fn_train_out = "ensembles";
  add_common(fn_train, fn_train_paths, true);
  fn_train->add_option("--portfolio", fn_train_portfolio, "window sizes");
  fn_train->add_option("--out", fn_train_out, "output directory");
  fn_train->add_option("--threads", threads, "build shards");

  auto* fn_infer = fn->add_subcommand("infer", "predict call-site signatures");
  CommonPaths fn_infer_paths;
  std::vector<std::string> fn_infer_manifests;
  std::string fn_sites_out = "call_sites.jsonl";
  std::string fn_functions_out = "functions.jsonl";
  std::string fn_infer_split = "all";
  std::string fn_infer_tau = "none";
  ScoringConfig fn_infer_config;
  add_common(fn_infer, fn_infer_paths, true);
  fn_infer->add_option("--manifest", fn_infer_manifests, "signature manifest(s)")
      ->required();
  fn_infer->add_option("--out-sites", fn_sites_out, "call-site output (JSONL)");
  fn_infer->add_option("--out-functions", fn_functions_out,
                       "aggregated function output (JSONL)");
  fn_infer->add_option("--split", fn_infer_split, "train|validation|test|all");
  fn_infer->add_option("--tau", fn_infer_tau, "confidence threshold or 'none'");
  fn_infer->add_option("--k", fn_infer_config.k, "top-k candidates per query");
  fn_infer->add_option("--min-contexts", fn_infer_config.min_contexts,
                       "minimum matched contexts to emit");
  fn_infer->add_option("--threads", threads, "worker threads");

  auto* fn_triage =
      fn->add_subcommand("triage", "rank predicted functions by prefix");
  CommonPaths fn_triage_paths;
  std::string fn_triage_functions;
  std::string fn_triage_prefix;
  fn_triage
      ->add_option("--functions", fn_triage_functions,
                   "aggregated function predictions (JSONL)")
      ->required();
  fn_triage->add_option("--prefix", fn_triage_prefix, "signature name prefix")
      ->required();
  fn_triage->add_option("--corpus", fn_triage_paths.corpus,
                        "corpus for ground truth (optional)");
  fn_triage->add_option("--types", fn_triage_paths.types, "type library");
  fn_triage->add_option("--signatures", fn_triage_paths.signatures,
                        "signature library");

  auto* db = app.add_subcommand("db", "database utilities");
  db->require_subcommand(1);
  auto* db_stats = db->add_subcommand("stats", "print database statistics");
  std::string db_path;
  bool db_verify = false;
  db_stats->add_option("--db", db_path, "database file")->required();
  db_stats->add_flag("--verify", db_verify, "recompute the payload checksum");

  auto* tok = app.add_subcommand("tokenize", "dump the normalized token stream");
  std::string tok_code;
  std::string tok_input;
  bool tok_debug = false;
  tok->add_option("--code", tok_code, "inline source text");
  tok->add_option("--input", tok_input, "source file");
  tok->add_flag("--debug", tok_debug, "include token classes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      return cmd_train(train_paths, train_portfolio, train_out, threads,
                       Vocabulary::Types);
    }
    if (*infer) {
      infer_config.struct_priority = !no_struct_priority;
      return cmd_infer(infer_paths, infer_manifests, infer_out, infer_split,
                       infer_tau, infer_config, infer_calibration, threads);
    }
    if (*calibrate) {
      return cmd_calibrate(calibrate_paths, calibrate_predictions,
                           calibrate_out);
    }
    if (*eval) {
      return cmd_eval(eval_paths, eval_predictions, eval_out, eval_grid);
    }
    if (*fn_train) {
      return cmd_train(fn_train_paths, fn_train_portfolio, fn_train_out,
                       threads, Vocabulary::Signatures);
    }
    if (*fn_infer) {
      return cmd_fn_infer(fn_infer_paths, fn_infer_manifests, fn_sites_out,
                          fn_functions_out, fn_infer_split, fn_infer_tau,
                          fn_infer_config, threads);
    }
    if (*fn_triage) {
      return cmd_fn_triage(fn_triage_functions, fn_triage_prefix,
                           fn_triage_paths);
    }
    if (*db_stats) {
      return cmd_db_stats(db_path, db_verify);
    }
    if (*tok) {
      return cmd_tokenize(tok_code, tok_input, tok_debug);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
