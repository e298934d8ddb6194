#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support/corpusgen.hpp"
#include "support/reference.hpp"
#include "typrec/engine.hpp"
#include "typrec/signatures.hpp"

using namespace typrec;
using namespace testsupport;

namespace {

MatchEvidence evidence_of(
    const std::vector<std::pair<std::uint32_t, std::vector<ContextMatch>>>& rows) {
  MatchEvidence ev;
  for (const auto& [label, matches] : rows) ev.by_label[label] = matches;
  return ev;
}

}  // namespace

TEST_CASE("context contribution formula") {
  // Direct evaluations of 0.5 + 0.5 * (n/n_max)^e / d.
  CHECK(context_contribution(48, 48, 1) == 1.0);
  CHECK(context_contribution(8, 48, 1) ==
        doctest::Approx(0.5 + 0.5 * (8.0 / 48.0)).epsilon(1e-15));
  CHECK(context_contribution(2, 48, 2) ==
        doctest::Approx(0.5 + 0.5 * (2.0 / 48.0) * 0.5).epsilon(1e-15));

  SUBCASE("monotone increasing in n") {
    double prev = 0.0;
    for (std::uint32_t n = 1; n <= 48; ++n) {
      double value = context_contribution(n, 48, 3);
      CHECK(value > prev);
      prev = value;
    }
  }
  SUBCASE("monotone decreasing in diversity") {
    double prev = 2.0;
    for (std::uint32_t d = 1; d <= 20; ++d) {
      double value = context_contribution(8, 48, d);
      CHECK(value < prev);
      CHECK(value > 0.5);
      CHECK(value <= 1.0);
      prev = value;
    }
  }
  SUBCASE("exponent shapes the weight") {
    CHECK(context_contribution(12, 48, 1, 2.0) ==
          doctest::Approx(0.5 + 0.5 * 0.0625).epsilon(1e-15));
  }
}

TEST_CASE("raw score sums the oracle contributions") {
  // Two matches: (n=8, d=1) and (n=2, d=2) against n_max=48; the sum is
  // 7/12 + 49/96 = 105/96.
  MatchEvidence ev = evidence_of({{0, {{0, 8, 1, 1, true}, {1, 2, 1, 2, true}}}});
  std::vector<std::uint64_t> freqs = {10};
  std::vector<std::string> names = {"int32_t"};
  auto ranked = score_candidates(ev, ScoringConfig{}, 48, freqs, names);
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0].raw_score == doctest::Approx(105.0 / 96.0).epsilon(1e-15));
  CHECK(ranked[0].matched_context_count == 2);
  REQUIRE(ranked[0].contributions.size() == 2);
  CHECK(ranked[0].raw_score ==
        ranked[0].contributions[0] + ranked[0].contributions[1]);
}

TEST_CASE("equal scores break ties by global frequency then name") {
  MatchEvidence ev = evidence_of({
      {0, {{0, 8, 1, 1, true}}},
      {1, {{0, 8, 1, 1, true}}},
      {2, {{0, 8, 1, 1, true}}},
  });
  std::vector<std::uint64_t> freqs = {3, 10, 10};
  std::vector<std::string> names = {"alpha", "zeta", "beta"};
  auto ranked = score_candidates(ev, ScoringConfig{}, 48, freqs, names);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].name == "beta");   // freq 10, name before zeta
  CHECK(ranked[1].name == "zeta");   // freq 10
  CHECK(ranked[2].name == "alpha");  // freq 3
}

TEST_CASE("empty evidence gives an empty ranking") {
  MatchEvidence ev;
  std::vector<std::uint64_t> freqs;
  std::vector<std::string> names;
  CHECK(score_candidates(ev, ScoringConfig{}, 48, freqs, names).empty());
}

TEST_CASE("below-top-k matches contribute nothing") {
  MatchEvidence ev = evidence_of({{0, {{0, 8, 1, 1, true}, {1, 8, 1, 1, false}}}});
  std::vector<std::uint64_t> freqs = {1};
  std::vector<std::string> names = {"t"};
  auto ranked = score_candidates(ev, ScoringConfig{}, 48, freqs, names);
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0].matched_context_count == 1);
}

TEST_CASE("score additivity: dropping one match removes its contribution") {
  MatchEvidence full = evidence_of(
      {{0, {{0, 2, 1, 1, true}, {0, 8, 1, 3, true}, {1, 12, 1, 2, true}}}});
  MatchEvidence reduced = evidence_of(
      {{0, {{0, 2, 1, 1, true}, {1, 12, 1, 2, true}}}});
  std::vector<std::uint64_t> freqs = {1};
  std::vector<std::string> names = {"t"};
  auto a = score_candidates(full, ScoringConfig{}, 48, freqs, names);
  auto b = score_candidates(reduced, ScoringConfig{}, 48, freqs, names);
  double removed = context_contribution(8, 48, 3);
  CHECK(a[0].raw_score - b[0].raw_score == doctest::Approx(removed).epsilon(1e-15));
}

TEST_CASE("confidence normalization") {
  // s* = M: every contribution was maximal.
  CHECK(normalize_confidence(4.0, 4) == 1.0);
  CHECK(normalize_confidence(1.0, 1) == 1.0);
  // s* <= M/2 hits the guard.
  CHECK(normalize_confidence(2.0, 4) == 0.0);
  CHECK(normalize_confidence(0.4, 1) == 0.0);
  CHECK(normalize_confidence(5.0, 0) == 0.0);
  // interior point
  CHECK(normalize_confidence(3.0, 4) == 0.5);

  SUBCASE("bounded and monotone in s*") {
    double prev = -1.0;
    for (double s = 0.0; s <= 6.0; s += 0.125) {
      double c = normalize_confidence(s, 5);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("struct priority") {
  TypeLibrary lib = basic_types();
  auto candidate = [](std::uint32_t id, const std::string& name, double score) {
    Candidate c;
    c.label_id = id;
    c.name = name;
    c.raw_score = score;
    return c;
  };

  SUBCASE("struct within margin is promoted") {
    std::vector<Candidate> ranked = {candidate(0, "int32_t", 2.0),
                                     candidate(1, "node_t", 1.96)};
    apply_struct_priority(ranked, lib, Bitness::Bits64, 0.05);
    CHECK(ranked[0].name == "node_t");
    CHECK(ranked[1].name == "int32_t");
  }

  SUBCASE("struct already on top stays") {
    std::vector<Candidate> ranked = {candidate(0, "node_t", 2.0),
                                     candidate(1, "int32_t", 1.99)};
    apply_struct_priority(ranked, lib, Bitness::Bits64, 0.05);
    CHECK(ranked[0].name == "node_t");
  }

  SUBCASE("struct outside margin stays put") {
    std::vector<Candidate> ranked = {candidate(0, "int32_t", 2.0),
                                     candidate(1, "node_t", 1.8)};
    apply_struct_priority(ranked, lib, Bitness::Bits64, 0.05);
    CHECK(ranked[0].name == "int32_t");
  }

  SUBCASE("pointer-to-struct counts as struct kind") {
    std::vector<Candidate> ranked = {candidate(0, "int32_t", 2.0),
                                     candidate(1, "node_t*", 1.98)};
    apply_struct_priority(ranked, lib, Bitness::Bits64, 0.05);
    CHECK(ranked[0].name == "node_t*");
  }

  SUBCASE("only order changes, never membership") {
    std::vector<Candidate> ranked = {candidate(0, "int32_t", 2.0),
                                     candidate(1, "uint64_t", 1.99),
                                     candidate(2, "node_t", 1.97),
                                     candidate(3, "conn_t", 1.96)};
    apply_struct_priority(ranked, lib, Bitness::Bits64, 0.05);
    REQUIRE(ranked.size() == 4);
    CHECK(ranked[0].name == "node_t");  // best struct in margin
    CHECK(ranked[1].name == "int32_t");
    CHECK(ranked[2].name == "uint64_t");
    CHECK(ranked[3].name == "conn_t");
  }
}

TEST_CASE("inference end to end on a tiny corpus") {
  Corpus corpus;
  corpus.type_library = basic_types();
  // Unique radius-4 context for x; no other training pattern collides.
  corpus.functions.push_back(make_fn("train", 1, Bitness::Bits64, Split::Train,
                                     "alpha beta gamma delta x eps zeta eta theta",
                                     {{"x", "conn_t"}}));
  std::vector<std::uint32_t> portfolio = {4};
  DatabaseEnsemble ensemble = DatabaseEnsemble::build(
      corpus, portfolio, Bitness::Bits64, Vocabulary::Types);
  InferenceEngine engine(ensemble, &corpus.type_library, ScoringConfig{});

  SUBCASE("unique maximal context gives confidence 1.0") {
    Prediction p = engine.infer_variable(corpus.functions.front(), "x");
    REQUIRE(!p.abstained);
    CHECK(p.label == "conn_t");
    CHECK(p.c_norm == 1.0);
    CHECK(p.raw_score == 1.0);
  }

  SUBCASE("zero database hits abstain with zero confidence") {
    AnnotatedFunction probe = make_fn("probe", 9, Bitness::Bits64, Split::Test,
                                      "completely different tokens here");
    Prediction p = engine.infer_variable(probe, "tokens");
    CHECK(p.abstained);
    CHECK(!p.label.has_value());
    CHECK(p.c_norm == 0.0);
    CHECK(p.candidates.empty());
  }

  SUBCASE("bitness mismatch is rejected") {
    AnnotatedFunction probe = make_fn("probe", 9, Bitness::Bits32, Split::Test,
                                      "x = 1;");
    CHECK_THROWS_WITH_AS(engine.infer_variable(probe, "x"),
                         doctest::Contains("bitness"), InputError);
  }

  SUBCASE("raw code infers without a corpus record") {
    Prediction p = engine.infer_variable_in_code(
        "alpha beta gamma delta x eps zeta eta theta", Bitness::Bits64, "x");
    CHECK(p.label == "conn_t");
    CHECK(p.c_norm == 1.0);
    auto all = engine.infer_code("alpha beta gamma delta x eps zeta eta theta",
                                 Bitness::Bits64);
    CHECK(all.size() == 9);  // every identifier, none are call sites
  }

  SUBCASE("min_contexts raises the evidence bar") {
    ScoringConfig conservative;
    conservative.min_contexts = 3;
    InferenceEngine strict(ensemble, &corpus.type_library, conservative);
    Prediction p = strict.infer_variable(corpus.functions.front(), "x");
    CHECK(p.abstained);            // only one matched context
    CHECK(!p.candidates.empty());  // the evidence itself is still reported
    CHECK(p.c_norm == 1.0);
  }
}

TEST_CASE("a half-score evidence pattern abstains at tau 0.65") {
  // Four occurrences matching only at n=24 with n_max=48 and d=1: each
  // contribution is 0.75, so s* = 3, M = 4, c_norm = 0.5.
  Corpus corpus;
  corpus.type_library = basic_types();
  auto instance_tokens = [](int i, bool variant) {
    std::vector<std::string> tokens;
    for (int p = 26; p >= 1; --p) {
      std::string t = "i" + std::to_string(i) + "l" + std::to_string(p);
      if (p > 24 && variant) t += "q";
      tokens.push_back(t);
    }
    tokens.push_back("xv");
    for (int p = 1; p <= 26; ++p) {
      std::string t = "i" + std::to_string(i) + "r" + std::to_string(p);
      if (p > 24 && variant) t += "q";
      tokens.push_back(t);
    }
    return tokens;
  };
  // One train function per occurrence pattern; the probe function strings
  // all four together so the variable occurs four times.
  std::vector<std::string> probe_tokens;
  for (int i = 0; i < 4; ++i) {
    auto backer = instance_tokens(i, false);
    corpus.functions.push_back(make_fn("t" + std::to_string(i), i + 1,
                                       Bitness::Bits64, Split::Train,
                                       join_tokens(backer), {{"xv", "int32_t"}}));
    auto variant = instance_tokens(i, true);
    probe_tokens.insert(probe_tokens.end(), variant.begin(), variant.end());
  }
  AnnotatedFunction probe = make_fn("probe", 99, Bitness::Bits64, Split::Test,
                                    join_tokens(probe_tokens));

  std::vector<std::uint32_t> portfolio = {24, 48};
  DatabaseEnsemble ensemble = DatabaseEnsemble::build(
      corpus, portfolio, Bitness::Bits64, Vocabulary::Types);
  InferenceEngine engine(ensemble, &corpus.type_library, ScoringConfig{});

  Prediction open = engine.infer_variable(probe, "xv");
  REQUIRE(!open.abstained);
  CHECK(open.raw_score == 3.0);
  CHECK(open.candidates.front().matched_context_count == 4);
  CHECK(open.c_norm == 0.5);

  Prediction gated = engine.infer_variable(probe, "xv", 0.65);
  CHECK(gated.abstained);
  CHECK(!gated.label.has_value());
  CHECK(gated.c_norm == 0.5);  // confidence is kept on the threshold path
}

TEST_CASE("infer_function enumerates identifiers, skipping call sites") {
  Corpus corpus;
  corpus.type_library = basic_types();
  corpus.functions.push_back(make_fn("train", 1, Bitness::Bits64, Split::Train,
                                     "a = b + c ;", {{"a", "int32_t"}}));
  std::vector<std::uint32_t> portfolio = {2};
  DatabaseEnsemble ensemble = DatabaseEnsemble::build(
      corpus, portfolio, Bitness::Bits64, Vocabulary::Types);
  InferenceEngine engine(ensemble, &corpus.type_library, ScoringConfig{});

  AnnotatedFunction probe = make_fn("p", 2, Bitness::Bits64, Split::Test,
                                    "r = helper ( s ) + t ;");
  auto predictions = engine.infer_function(probe);
  // helper is a call site; r, s, t remain, in first-occurrence order.
  REQUIRE(predictions.size() == 3);
  CHECK(predictions[0].identifier == "r");
  CHECK(predictions[1].identifier == "s");
  CHECK(predictions[2].identifier == "t");

  SUBCASE("empty body gives an empty list") {
    AnnotatedFunction empty = make_fn("e", 3, Bitness::Bits64, Split::Test, "");
    CHECK(engine.infer_function(empty).empty());
  }

  SUBCASE("reruns are identical") {
    auto again = engine.infer_function(probe);
    REQUIRE(again.size() == predictions.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].identifier == predictions[i].identifier);
      CHECK(again[i].abstained == predictions[i].abstained);
      CHECK(again[i].c_norm == predictions[i].c_norm);
      CHECK(prediction_to_json(again[i], 3) ==
            prediction_to_json(predictions[i], 3));
    }
  }
}

TEST_CASE("vocabulary mismatch is rejected") {
  auto fixture = call_aggregation_fixture();
  DatabaseEnsemble signatures = build_signature_database(
      fixture.corpus, fixture.portfolio, Bitness::Bits64);
  InferenceEngine engine(signatures, &fixture.corpus.type_library,
                         ScoringConfig{});
  CHECK_THROWS_WITH_AS(engine.infer_variable(*fixture.caller, "sa1"),
                       doctest::Contains("vocabulary"), InputError);
}

TEST_CASE("abstention is monotone in the threshold") {
  Corpus corpus = random_corpus(2024, 40);
  std::vector<std::uint32_t> portfolio = {2, 4, 8};
  DatabaseEnsemble ensemble = DatabaseEnsemble::build(
      corpus, portfolio, Bitness::Bits64, Vocabulary::Types);
  InferenceEngine engine(ensemble, &corpus.type_library, ScoringConfig{});
  for (const AnnotatedFunction& fn : corpus.functions) {
    auto loose = engine.infer_function(fn, 0.1);
    auto tight = engine.infer_function(fn, 0.6);
    REQUIRE(loose.size() == tight.size());
    for (std::size_t i = 0; i < loose.size(); ++i) {
      if (!tight[i].abstained) CHECK(!loose[i].abstained);
    }
  }
}

TEST_CASE("engine matches the brute-force reference bit for bit") {
  for (std::uint64_t seed : {1ull, 7ull, 42ull, 1234ull}) {
    Corpus corpus = random_corpus(seed, 50);
    for (auto portfolio : {std::vector<std::uint32_t>{2, 4, 8},
                           std::vector<std::uint32_t>{2, 4, 8, 12, 48}}) {
      ScoringConfig config;
      config.k = seed % 2 == 0 ? 3 : 1;
      Threshold tau = seed % 3 == 0 ? Threshold{} : Threshold{0.3};
      DatabaseEnsemble ensemble = DatabaseEnsemble::build(
          corpus, portfolio, Bitness::Bits64, Vocabulary::Types);
      InferenceEngine engine(ensemble, &corpus.type_library, config);
      ReferenceEngine reference(corpus, portfolio, Bitness::Bits64, config);

      for (const AnnotatedFunction& fn : corpus.functions) {
        auto got = engine.infer_function(fn, tau);
        auto want = reference.infer_function(fn, tau);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].identifier == want[i].identifier);
          CHECK(got[i].abstained == want[i].abstained);
          CHECK(got[i].label == want[i].label);
          CHECK(got[i].raw_score == want[i].raw_score);  // bit-exact
          CHECK(got[i].c_norm == want[i].c_norm);        // bit-exact
          REQUIRE(got[i].candidates.size() == want[i].ranking.size());
          for (std::size_t c = 0; c < got[i].candidates.size(); ++c) {
            CHECK(got[i].candidates[c].name == want[i].ranking[c].name);
            CHECK(got[i].candidates[c].raw_score == want[i].ranking[c].raw_score);
            CHECK(got[i].candidates[c].matched_context_count ==
                  want[i].ranking[c].matched);
          }
        }
      }
    }
  }
}
