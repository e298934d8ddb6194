#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "support/corpusgen.hpp"
#include "support/tmpdir.hpp"
#include "typrec/calibrate.hpp"
#include "typrec/engine.hpp"
#include "typrec/signatures.hpp"

using namespace typrec;
using namespace testsupport;

namespace {

#ifndef TYPREC_CLI_PATH
#error "TYPREC_CLI_PATH must point at the CLI binary"
#endif

struct RunResult {
  int exit_code = 0;
  std::string output;
};

RunResult run_cli(const ScopedTempDir& dir, const std::string& args,
                  const std::string& env = "") {
  std::filesystem::path log = dir.file("cli_output.log");
  std::string command = env + (env.empty() ? "" : " ") + TYPREC_CLI_PATH + " " +
                        args + " > " + log.string() + " 2>&1";
  int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  result.output.assign(std::istreambuf_iterator<char>(in), {});
  return result;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Writes a small mixed corpus: two 64-bit train functions with distinctive
// contexts, plus validation/test copies.
void write_basic_corpus(const ScopedTempDir& dir, bool with_32bit = false) {
  Corpus corpus;
  corpus.type_library = basic_types();
  SignatureLibrary sigs;
  sigs.insert(SignatureLabel{"sig_send", "sig_send", {{"c", "conn_t"}}, "int32_t"});
  corpus.signature_library = std::move(sigs);

  corpus.functions.push_back(make_fn(
      "lib1", 0x1000, Bitness::Bits64, Split::Train,
      "n = conn -> fd + 1 ; send_all ( conn , n ) ;",
      {{"n", "int32_t"}, {"conn", "conn_t"}}, {{"send_all", "sig_send"}}));
  corpus.functions.push_back(make_fn(
      "lib1", 0x1040, Bitness::Bits64, Split::Train,
      "total = total + step ;", {{"total", "uint64_t"}, {"step", "uint64_t"}}));
  corpus.functions.push_back(make_fn(
      "lib2", 0x2000, Bitness::Bits64, Split::Validation,
      "n = conn -> fd + 1 ; send_all ( conn , n ) ;",
      {{"n", "int32_t"}, {"conn", "conn_t"}}, {{"send_all", "sig_send"}}));
  corpus.functions.push_back(make_fn(
      "lib3", 0x3000, Bitness::Bits64, Split::Test,
      "n = conn -> fd + 1 ; send_all ( conn , n ) ;",
      {{"n", "int32_t"}, {"conn", "conn_t"}}, {{"send_all", "sig_send"}}));
  if (with_32bit) {
    corpus.functions.push_back(make_fn("mcu", 0x100, Bitness::Bits32,
                                       Split::Train, "flag = flag & mask ;",
                                       {{"flag", "int32_t"}}));
  }
  save_corpus(corpus, dir.file("corpus.jsonl"), dir.file("types.json"),
              dir.file("sigs.json"));
}

std::string common_args(const ScopedTempDir& dir) {
  return "--corpus " + dir.file("corpus.jsonl").string() + " --types " +
         dir.file("types.json").string() + " --signatures " +
         dir.file("sigs.json").string();
}

}  // namespace

TEST_CASE("train writes one database per portfolio member plus a manifest") {
  ScopedTempDir dir("cli_train");
  write_basic_corpus(dir);
  auto result = run_cli(dir, "train " + common_args(dir) + " --out " +
                                 dir.file("ens").string());
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  CHECK(std::filesystem::exists(dir.file("ens/manifest_types_64.json")));
  for (int n : {2, 4, 8, 12, 48}) {
    CHECK(std::filesystem::exists(
        dir.file("ens/db_types_64_n" + std::to_string(n) + ".ngdb")));
  }
  CHECK(result.output.find("keys=") != std::string::npos);
}

TEST_CASE("mixed-bitness corpora produce two manifests") {
  ScopedTempDir dir("cli_mixed");
  write_basic_corpus(dir, /*with_32bit=*/true);
  auto result = run_cli(dir, "train " + common_args(dir) + " --out " +
                                 dir.file("ens").string() + " --portfolio 2,4");
  REQUIRE(result.exit_code == 0);
  CHECK(std::filesystem::exists(dir.file("ens/manifest_types_32.json")));
  CHECK(std::filesystem::exists(dir.file("ens/manifest_types_64.json")));
}

TEST_CASE("empty train split is an input error") {
  ScopedTempDir dir("cli_empty");
  Corpus corpus;
  corpus.type_library = basic_types();
  corpus.functions.push_back(make_fn("b", 1, Bitness::Bits64, Split::Test,
                                     "x = 1 ;", {{"x", "int32_t"}}));
  save_corpus(corpus, dir.file("corpus.jsonl"), dir.file("types.json"),
              dir.file("sigs.json"));
  auto result = run_cli(dir, "train " + common_args(dir) + " --out " +
                                 dir.file("ens").string());
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("error:") != std::string::npos);
}

TEST_CASE("inference on the training corpus reproduces unique-context labels") {
  ScopedTempDir dir("cli_recall");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "train " + common_args(dir) + " --out " +
                           dir.file("ens").string())
              .exit_code == 0);
  auto result = run_cli(
      dir, "infer " + common_args(dir) + " --manifest " +
               dir.file("ens/manifest_types_64.json").string() +
               " --split train --out " + dir.file("train_preds.jsonl").string());
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  CHECK(result.output.find("functions/s") != std::string::npos);

  auto predictions = load_predictions(dir.file("train_preds.jsonl"));
  Corpus corpus = load_corpus(dir.file("corpus.jsonl"), dir.file("types.json"),
                              dir.file("sigs.json"));
  std::size_t checked = 0;
  for (const Prediction& p : predictions) {
    const AnnotatedFunction* fn = corpus.find_function(p.binary_id, p.address);
    REQUIRE(fn != nullptr);
    auto annotation = fn->variable_annotations.find(p.identifier);
    if (annotation == fn->variable_annotations.end()) continue;
    CHECK(p.label == annotation->second);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("kept predictions nest as tau rises") {
  ScopedTempDir dir("cli_tau");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "train " + common_args(dir) + " --out " +
                           dir.file("ens").string())
              .exit_code == 0);
  auto run_tau = [&](const std::string& tau, const std::string& out) {
    return run_cli(dir, "infer " + common_args(dir) + " --manifest " +
                            dir.file("ens/manifest_types_64.json").string() +
                            " --tau " + tau + " --out " +
                            dir.file(out).string());
  };
  REQUIRE(run_tau("0.4", "t04.jsonl").exit_code == 0);
  REQUIRE(run_tau("0.9", "t09.jsonl").exit_code == 0);
  auto kept_set = [&](const std::string& file) {
    std::set<std::string> kept;
    for (const Prediction& p : load_predictions(dir.file(file))) {
      if (!p.abstained) {
        kept.insert(p.binary_id + "/" + address_to_hex(p.address) + "/" +
                    p.identifier);
      }
    }
    return kept;
  };
  auto loose = kept_set("t04.jsonl");
  auto tight = kept_set("t09.jsonl");
  for (const auto& key : tight) CHECK(loose.contains(key));
}

TEST_CASE("reruns produce byte-identical prediction files") {
  ScopedTempDir dir("cli_determinism");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "train " + common_args(dir) + " --out " +
                           dir.file("ens").string())
              .exit_code == 0);
  for (const char* out : {"a.jsonl", "b.jsonl"}) {
    REQUIRE(run_cli(dir, "infer " + common_args(dir) + " --manifest " +
                             dir.file("ens/manifest_types_64.json").string() +
                             " --threads 4 --out " + dir.file(out).string())
                .exit_code == 0);
  }
  CHECK(slurp(dir.file("a.jsonl")) == slurp(dir.file("b.jsonl")));
}

TEST_CASE("calibrate: all-correct validation produces the constant 1.0 map") {
  ScopedTempDir dir("cli_calibrate");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "train " + common_args(dir) + " --out " +
                           dir.file("ens").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "infer " + common_args(dir) + " --manifest " +
                           dir.file("ens/manifest_types_64.json").string() +
                           " --split validation --out " +
                           dir.file("val.jsonl").string())
              .exit_code == 0);
  auto result = run_cli(dir, "calibrate " + common_args(dir) +
                                 " --predictions " +
                                 dir.file("val.jsonl").string() + " --out " +
                                 dir.file("map.json").string());
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  CalibrationMap map = CalibrationMap::load(dir.file("map.json"));
  for (double s : {0.0, 0.5, 1.0}) CHECK(map.apply(s) == 1.0);

  SUBCASE("missing ground truth is an error") {
    // Predictions that resolve nowhere in the corpus.
    std::ofstream out(dir.file("orphan.jsonl"));
    out << R"({"binary_id":"nobody","address":"0x1","identifier":"x","label":"int32_t","raw_score":1.0,"confidence":1.0,"calibrated":null,"abstained":false,"candidates":[]})"
        << "\n";
    out.close();
    auto bad = run_cli(dir, "calibrate " + common_args(dir) +
                                " --predictions " +
                                dir.file("orphan.jsonl").string() + " --out " +
                                dir.file("map2.json").string());
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("no calibration pairs") != std::string::npos);
  }
}

TEST_CASE("eval emits reports, csv, and json") {
  ScopedTempDir dir("cli_eval");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "train " + common_args(dir) + " --out " +
                           dir.file("ens").string())
              .exit_code == 0);
  REQUIRE(run_cli(dir, "infer " + common_args(dir) + " --manifest " +
                           dir.file("ens/manifest_types_64.json").string() +
                           " --split test --out " +
                           dir.file("test.jsonl").string())
              .exit_code == 0);
  auto result = run_cli(dir, "eval " + common_args(dir) + " --predictions " +
                                 dir.file("test.jsonl").string() +
                                 " --out-dir " + dir.file("reports").string());
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  CHECK(result.output.find("overall accuracy") != std::string::npos);
  CHECK(result.output.find("struct identification") != std::string::npos);
  CHECK(result.output.find("layout recovery") != std::string::npos);
  CHECK(std::filesystem::exists(dir.file("reports/coverage_risk.csv")));
  CHECK(std::filesystem::exists(dir.file("reports/reports.json")));
  std::string csv = slurp(dir.file("reports/coverage_risk.csv"));
  CHECK(csv.find("tau,total,kept") != std::string::npos);
}

TEST_CASE("signature pipeline aggregates the staged caller via the CLI") {
  ScopedTempDir dir("cli_fn");
  auto fixture = call_aggregation_fixture();
  save_corpus(fixture.corpus, dir.file("corpus.jsonl"), dir.file("types.json"),
              dir.file("sigs.json"));

  REQUIRE(run_cli(dir, "fn train " + common_args(dir) + " --portfolio 8,10" +
                           " --out " + dir.file("ens").string())
              .exit_code == 0);
  auto result = run_cli(
      dir, "fn infer " + common_args(dir) + " --manifest " +
               dir.file("ens/manifest_signatures_64.json").string() +
               " --split test --tau 0.5 --out-sites " +
               dir.file("sites.jsonl").string() + " --out-functions " +
               dir.file("fns.jsonl").string());
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);

  auto functions = load_function_predictions(dir.file("fns.jsonl"));
  REQUIRE(functions.size() == 1);
  CHECK(functions[0].callee == "sub_aaa");
  CHECK(functions[0].signature == "sigA");
  CHECK(functions[0].contributing_contexts == 2);

  std::string sites = slurp(dir.file("sites.jsonl"));
  CHECK(sites.find("\"abstained\":true") != std::string::npos);   // sub_fff
  CHECK(sites.find("\"abstained\":false") != std::string::npos);  // sub_aaa

  SUBCASE("triage filters by prefix") {
    auto triage = run_cli(dir, "fn triage --functions " +
                                   dir.file("fns.jsonl").string() +
                                   " --prefix sigA " + common_args(dir));
    REQUIRE(triage.exit_code == 0);
    CHECK(triage.output.find("sub_aaa <- sigA") != std::string::npos);
    CHECK(triage.output.find("precision: 1.0") != std::string::npos);
  }
}

TEST_CASE("vocabulary mixing is rejected with the input-error exit code") {
  ScopedTempDir dir("cli_mixing");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "fn train " + common_args(dir) + " --portfolio 2,4 " +
                           "--out " + dir.file("ens").string())
              .exit_code == 0);
  auto result = run_cli(dir, "infer " + common_args(dir) + " --manifest " +
                                 dir.file("ens/manifest_signatures_64.json").string() +
                                 " --out " + dir.file("x.jsonl").string());
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("expected a types ensemble") != std::string::npos);
}

TEST_CASE("tokenize dumps one token per line") {
  ScopedTempDir dir("cli_tokenize");
  auto result = run_cli(dir, "tokenize --debug --code 'x = 5;'");
  REQUIRE(result.exit_code == 0);
  CHECK(result.output == "x\tidentifier\n=\toperator\n<NUM>\tnumber\n;\tpunctuation\n");
}

TEST_CASE("config file supplies defaults and flags override it") {
  ScopedTempDir dir("cli_config");
  write_basic_corpus(dir);
  REQUIRE(run_cli(dir, "train " + common_args(dir) + " --out " +
                           dir.file("ens").string())
              .exit_code == 0);
  {
    std::ofstream config(dir.file("typrec.ini"));
    config << "[infer]\n"
           << "tau=0.9\n"
           << "out=" << dir.file("from_config.jsonl").string() << "\n";
  }
  std::string base = "infer " + common_args(dir) + " --manifest " +
                     dir.file("ens/manifest_types_64.json").string() +
                     " --split test";

  // Config file engaged through the environment variable.
  auto via_env = run_cli(dir, base,
                         "TYPREC_CONFIG=" + dir.file("typrec.ini").string());
  CAPTURE(via_env.output);
  REQUIRE(via_env.exit_code == 0);
  REQUIRE(std::filesystem::exists(dir.file("from_config.jsonl")));
  std::size_t kept_config = 0;
  for (const Prediction& p : load_predictions(dir.file("from_config.jsonl"))) {
    kept_config += p.abstained ? 0 : 1;
  }

  // Explicit flag wins over the file value.
  auto flag_wins = run_cli(dir, base + " --tau none --out " +
                                    dir.file("flag.jsonl").string(),
                           "TYPREC_CONFIG=" + dir.file("typrec.ini").string());
  REQUIRE(flag_wins.exit_code == 0);
  std::size_t kept_flag = 0;
  for (const Prediction& p : load_predictions(dir.file("flag.jsonl"))) {
    kept_flag += p.abstained ? 0 : 1;
  }
  // tau 0.9 abstains on the 0.58-confidence test variables; tau none keeps them.
  CHECK(kept_config == 0);
  CHECK(kept_flag >= 2);
}
