#pragma once

// Brute-force reference for variable inference. Context windows are
// re-extracted by naive slicing over token texts, the database is a plain
// map keyed on the literal token sequences (no hashing), and scores are
// recomputed with straightforward loops. Shares only the tokenizer with the
// production path.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "typrec/corpus.hpp"
#include "typrec/engine.hpp"
#include "typrec/lexer.hpp"

namespace testsupport {

using namespace typrec;

struct RefCandidate {
  std::string name;
  double raw_score = 0.0;
  std::uint32_t matched = 0;
};

struct RefPrediction {
  std::string identifier;
  std::optional<std::string> label;
  double raw_score = 0.0;
  double c_norm = 0.0;
  std::uint32_t matched = 0;
  bool abstained = true;
  std::vector<RefCandidate> ranking;
};

class ReferenceEngine {
 public:
  ReferenceEngine(const Corpus& corpus, std::vector<std::uint32_t> portfolio,
                  Bitness bitness, ScoringConfig config)
      : corpus_(&corpus),
        portfolio_(std::move(portfolio)),
        bitness_(bitness),
        config_(config) {
    for (const AnnotatedFunction& fn : corpus.functions) {
      if (fn.split != Split::Train || fn.bitness != bitness) continue;
      std::vector<std::string> texts = token_texts(fn.source_text);
      TokenStream stream = tokenize(fn.source_text);
      for (const auto& [identifier, label] : fn.variable_annotations) {
        if (corpus.type_library.find(label, bitness) == nullptr) continue;
        auto occ = stream.occurrences.find(identifier);
        if (occ == stream.occurrences.end()) continue;
        for (std::uint32_t index : occ->second) {
          for (std::uint32_t n : portfolio_) {
            tables_[n][window(texts, index, n)][label] += 1;
          }
          freq_[label] += 1;
        }
      }
    }
  }

  RefPrediction infer_variable(const AnnotatedFunction& fn,
                               const std::string& identifier,
                               Threshold tau) const {
    std::vector<std::string> texts = token_texts(fn.source_text);
    TokenStream stream = tokenize(fn.source_text);

    // label -> (score, matched), accumulated occurrence-major then
    // window-size-major to mirror the production summation order.
    std::map<std::string, RefCandidate> accum;
    auto occ = stream.occurrences.find(identifier);
    if (occ != stream.occurrences.end()) {
      for (std::uint32_t index : occ->second) {
        for (std::uint32_t n : portfolio_) {
          auto table = tables_.find(n);
          if (table == tables_.end()) continue;
          auto entry = table->second.find(window(texts, index, n));
          if (entry == table->second.end()) continue;
          const auto& labels = entry->second;
          auto top = top_k(labels, config_.k);
          for (const std::string& name : top) {
            double ratio = static_cast<double>(n) /
                           static_cast<double>(portfolio_.back());
            double weight = config_.weight_exponent == 1.0
                                ? ratio
                                : std::pow(ratio, config_.weight_exponent);
            double diversity = 1.0 / static_cast<double>(labels.size());
            double contribution = 0.5 + 0.5 * weight * diversity;
            RefCandidate& candidate = accum[name];
            candidate.name = name;
            candidate.raw_score += contribution;
            candidate.matched += 1;
          }
        }
      }
    }

    RefPrediction prediction;
    prediction.identifier = identifier;
    for (const auto& [_, candidate] : accum) prediction.ranking.push_back(candidate);
    std::sort(prediction.ranking.begin(), prediction.ranking.end(),
              [this](const RefCandidate& a, const RefCandidate& b) {
                if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
                std::uint64_t fa = freq_of(a.name);
                std::uint64_t fb = freq_of(b.name);
                if (fa != fb) return fa > fb;
                return a.name < b.name;
              });
    if (config_.struct_priority) apply_priority(prediction.ranking);
    if (prediction.ranking.empty()) return prediction;

    const RefCandidate& chosen = prediction.ranking.front();
    prediction.raw_score = chosen.raw_score;
    prediction.matched = chosen.matched;
    double m = static_cast<double>(chosen.matched);
    double baseline = 0.5 * m;
    if (chosen.matched > 0 && m > baseline && chosen.raw_score > baseline) {
      prediction.c_norm =
          std::clamp((chosen.raw_score - baseline) / (m - baseline), 0.0, 1.0);
    }
    bool keep = chosen.matched >= config_.min_contexts &&
                passes(prediction.c_norm, tau);
    if (keep) {
      prediction.label = chosen.name;
      prediction.abstained = false;
    }
    return prediction;
  }

  std::vector<RefPrediction> infer_function(const AnnotatedFunction& fn,
                                            Threshold tau) const {
    TokenStream stream = tokenize(fn.source_text);
    std::vector<std::pair<std::uint32_t, std::string>> order;
    for (const auto& [name, indices] : stream.occurrences) {
      bool call = false;
      for (std::uint32_t index : indices) {
        if (is_call_occurrence(stream, index)) call = true;
      }
      if (!call) order.emplace_back(indices.front(), name);
    }
    std::sort(order.begin(), order.end());
    std::vector<RefPrediction> out;
    for (const auto& [_, name] : order) {
      out.push_back(infer_variable(fn, name, tau));
    }
    return out;
  }

 private:
  static std::vector<std::string> token_texts(const std::string& code) {
    TokenStream stream = tokenize(code);
    std::vector<std::string> texts;
    texts.reserve(stream.tokens.size());
    for (const Token& t : stream.tokens) texts.push_back(t.text);
    return texts;
  }

  static std::vector<std::string> window(const std::vector<std::string>& texts,
                                         std::uint32_t center, std::uint32_t n) {
    std::vector<std::string> out;
    for (std::int64_t i = static_cast<std::int64_t>(center) - n;
         i < static_cast<std::int64_t>(center); ++i) {
      out.push_back(i < 0 ? "<BOS>" : texts[i]);
    }
    for (std::uint64_t i = center + 1; i <= center + n; ++i) {
      out.push_back(i < texts.size() ? texts[i] : "<EOS>");
    }
    return out;
  }

  static std::vector<std::string> top_k(
      const std::map<std::string, std::uint64_t>& labels, std::uint32_t k) {
    std::vector<std::pair<std::string, std::uint64_t>> sorted(labels.begin(),
                                                              labels.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < sorted.size() && i < k; ++i) {
      out.push_back(sorted[i].first);
    }
    return out;
  }

  std::uint64_t freq_of(const std::string& name) const {
    auto it = freq_.find(name);
    return it == freq_.end() ? 0 : it->second;
  }

  void apply_priority(std::vector<RefCandidate>& ranking) const {
    if (ranking.empty()) return;
    auto struct_kinded = [this](const RefCandidate& c) {
      const TypeLabel* label = corpus_->type_library.find(c.name, bitness_);
      return label != nullptr && is_struct_kind(label->kind);
    };
    if (struct_kinded(ranking.front())) return;
    double floor = (1.0 - config_.struct_priority_margin) * ranking.front().raw_score;
    for (std::size_t i = 1; i < ranking.size(); ++i) {
      if (ranking[i].raw_score < floor) break;
      if (struct_kinded(ranking[i])) {
        RefCandidate promoted = ranking[i];
        ranking.erase(ranking.begin() + i);
        ranking.insert(ranking.begin(), promoted);
        return;
      }
    }
  }

  static bool passes(double confidence, Threshold tau) {
    if (!tau) return true;
    if (*tau >= 1.0) return confidence >= *tau;
    return confidence > *tau;
  }

  const Corpus* corpus_;
  std::vector<std::uint32_t> portfolio_;
  Bitness bitness_;
  ScoringConfig config_;
  std::map<std::uint32_t,
           std::map<std::vector<std::string>, std::map<std::string, std::uint64_t>>>
      tables_;
  std::map<std::string, std::uint64_t> freq_;
};

// Deterministic fuzzer corpus: functions assembled from a small pool of
// mutated fragments so that contexts collide across functions at several
// window sizes.
inline Corpus random_corpus(std::uint64_t seed, std::size_t max_functions = 50) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  TypeLibrary lib;
  lib.insert(primitive("rt_int"));
  lib.insert(primitive("rt_uint"));
  lib.insert(primitive("rt_char"));
  lib.insert(TypeLabel{"rt_ptr", TypeKind::Pointer, std::nullopt, std::nullopt});
  lib.insert(struct_type("rt_node",
                         {{"next", 0, 8, "rt_node*"}, {"v", 8, 4, "rt_int"}}, 16));
  lib.insert(struct_type("rt_node*",
                         {{"next", 0, 8, "rt_node*"}, {"v", 8, 4, "rt_int"}}, 16,
                         TypeKind::PointerToStruct));
  lib.insert(struct_type("rt_conn", {{"fd", 0, 4, "rt_int"}, {"buf", 8, 8, "rt_ptr"}},
                         16));
  corpus.type_library = std::move(lib);
  const std::vector<std::string> labels = {"rt_int",  "rt_uint", "rt_char",
                                           "rt_ptr",  "rt_node", "rt_node*",
                                           "rt_conn"};

  const std::vector<std::string> idents = {"a", "b",  "c",  "x",   "y",
                                           "p", "q",  "len", "buf", "v1",
                                           "v2", "v3", "tmp", "ret"};
  const std::vector<std::string> glue = {"=", ";", "+", "*", "(", ")",
                                         ",", "->", "[", "]", "<NUM>", "if"};

  // Fragment pool shared by all functions in this corpus.
  std::uniform_int_distribution<std::size_t> frag_len(3, 9);
  std::vector<std::vector<std::string>> fragments;
  for (int f = 0; f < 24; ++f) {
    std::vector<std::string> frag;
    std::size_t len = frag_len(rng);
    for (std::size_t i = 0; i < len; ++i) {
      if (rng() % 3 == 0) {
        frag.push_back(idents[rng() % idents.size()]);
      } else {
        frag.push_back(glue[rng() % glue.size()]);
      }
    }
    fragments.push_back(std::move(frag));
  }

  std::uniform_int_distribution<std::size_t> count_dist(4, max_functions);
  std::size_t count = count_dist(rng);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::string> tokens;
    std::size_t pieces = 2 + rng() % 5;
    for (std::size_t p = 0; p < pieces; ++p) {
      auto frag = fragments[rng() % fragments.size()];
      if (rng() % 4 == 0 && !frag.empty()) {
        frag[rng() % frag.size()] = idents[rng() % idents.size()];  // mutate
      }
      tokens.insert(tokens.end(), frag.begin(), frag.end());
    }
    AnnotatedFunction fn;
    fn.binary_id = "bin" + std::to_string(rng() % 6);
    fn.address = 0x1000 + i;
    fn.bitness = Bitness::Bits64;
    std::size_t roll = rng() % 10;
    fn.split = roll < 6 ? Split::Train : (roll < 8 ? Split::Validation : Split::Test);
    fn.source_text = join_tokens(tokens);

    TokenStream stream = tokenize(fn.source_text);
    std::vector<std::string> present;
    for (const auto& [name, _] : stream.occurrences) present.push_back(name);
    std::sort(present.begin(), present.end());
    if (present.empty()) {
      fn.source_text += " x = <NUM> ;";
      present.push_back("x");
    }
    std::size_t annotations = 1 + rng() % std::min<std::size_t>(3, present.size());
    for (std::size_t a = 0; a < annotations; ++a) {
      const std::string& ident = present[rng() % present.size()];
      fn.variable_annotations[ident] = labels[rng() % labels.size()];
    }
    corpus.functions.push_back(std::move(fn));
  }
  // Guarantee at least one train function.
  corpus.functions.front().split = Split::Train;
  return corpus;
}

}  // namespace testsupport
