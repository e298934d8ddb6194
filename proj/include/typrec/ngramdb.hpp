#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "typrec/common.hpp"
#include "typrec/corpus.hpp"
#include "typrec/lexer.hpp"

namespace typrec {

struct LabelCount {
  std::uint32_t label_id = 0;
  std::uint32_t count = 0;

  bool operator==(const LabelCount&) const = default;
};

struct QueryResult {
  NGramKey key = 0;
  std::uint32_t n = 0;
  // Top-k by count descending, ties by label_id ascending. Label ids are
  // assigned by lexicographic label name, so the tie order is also
  // name-ascending.
  std::vector<LabelCount> candidates;
  // Total number of distinct labels stored under the key (>= candidates).
  std::uint32_t distinct_label_count = 0;
};

struct DbStats {
  std::uint64_t key_count = 0;
  std::uint64_t label_count = 0;
  std::uint64_t pair_count = 0;
  std::uint64_t on_disk_bytes = 0;   // exact serialized size
  std::uint64_t resident_bytes = 0;  // eagerly held memory for an open db
  double mean_labels_per_key = 0.0;
};

struct BuildCounters {
  std::uint64_t indexed_occurrences = 0;
  std::uint64_t skipped_other_vocabulary = 0;
  std::uint64_t skipped_unresolved = 0;
};

class MappedFile;

// Immutable map from context keys to per-label occurrence counts for one
// window size. Backed either by owned arrays (built/merged) or by a
// memory-mapped serialized file; queries behave identically for both and are
// safe from any number of threads.
class NGramDatabase {
 public:
  NGramDatabase(NGramDatabase&&) noexcept = default;
  NGramDatabase& operator=(NGramDatabase&&) noexcept = default;
  NGramDatabase(const NGramDatabase&) = delete;
  NGramDatabase& operator=(const NGramDatabase&) = delete;

  // Indexes every annotated identifier occurrence in train-split functions
  // of the given bitness. Throws InputError when the effective corpus is
  // empty. Annotations resolving only in the other vocabulary's library are
  // skipped and counted.
  static NGramDatabase build(const Corpus& corpus, std::uint32_t n, Bitness bitness,
                             Vocabulary vocabulary, BuildCounters* counters = nullptr);

  // Shard-per-binary-batch parallel build; shards are merged pairwise.
  // Output is identical to the single-threaded build.
  static NGramDatabase build_parallel(const Corpus& corpus, std::uint32_t n,
                                      Bitness bitness, Vocabulary vocabulary,
                                      unsigned threads,
                                      BuildCounters* counters = nullptr);

  static NGramDatabase open_mapped(const std::filesystem::path& path);
  void serialize(const std::filesystem::path& path) const;

  QueryResult query(NGramKey key, std::uint32_t k) const;

  std::uint32_t n() const { return n_; }
  Bitness bitness() const { return bitness_; }
  Vocabulary vocabulary() const { return vocabulary_; }

  std::uint64_t key_count() const;
  std::uint32_t label_count() const { return static_cast<std::uint32_t>(labels_.size()); }
  std::string_view label_name(std::uint32_t label_id) const;
  std::optional<std::uint32_t> label_id(std::string_view name) const;
  std::uint64_t global_label_frequency(std::uint32_t label_id) const;
  std::span<const std::string> label_names() const { return labels_; }
  std::span<const std::uint64_t> label_frequencies() const { return freqs_; }

  DbStats stats() const;

  // Recomputes the payload checksum over the mapped region. Open already
  // verifies it for files whose payload fits under the eager-verify limit;
  // larger files defer to this call so that opening stays O(header).
  bool verify_payload() const;
  bool checksum_verified_on_open() const { return checksum_verified_; }

  struct KeyEntry {
    std::uint64_t key = 0;
    std::uint64_t pair_offset = 0;  // element index into the pair arena
    std::uint32_t pair_count = 0;
    std::uint32_t reserved = 0;
  };

  // Key index in key-ascending order; mainly for tests and stats.
  std::span<const KeyEntry> key_index() const { return index_; }
  std::span<const LabelCount> pairs(const KeyEntry& entry) const;

 private:
  friend class NGramBuilder;
  NGramDatabase() = default;

  std::uint32_t n_ = 0;
  Bitness bitness_ = Bitness::Bits64;
  Vocabulary vocabulary_ = Vocabulary::Types;

  std::vector<KeyEntry> owned_index_;
  std::vector<LabelCount> owned_pairs_;
  std::span<const KeyEntry> index_;
  std::span<const LabelCount> pairs_;

  std::vector<std::string> labels_;  // label_id -> name, ids dense and name-sorted
  std::unordered_map<std::string, std::uint32_t> label_ids_;
  std::vector<std::uint64_t> freqs_;

  std::shared_ptr<MappedFile> mapping_;
  std::uint64_t file_size_ = 0;
  mutable bool checksum_verified_ = false;
  std::uint64_t stored_checksum_ = 0;
};

// Counts saturate at the 32-bit maximum; label tables are unioned and
// re-densified. The result is bit-identical regardless of argument order.
NGramDatabase merge_databases(const NGramDatabase& a, const NGramDatabase& b);

// Mutable accumulator used by build and merge; also handy for synthesizing
// databases directly in tests.
class NGramBuilder {
 public:
  NGramBuilder(std::uint32_t n, Bitness bitness, Vocabulary vocabulary);

  void add(NGramKey key, std::string_view label, std::uint64_t count = 1);
  void add_label_frequency(std::string_view label, std::uint64_t count);

  NGramDatabase freeze() &&;

 private:
  std::uint32_t intern(std::string_view label);

  std::uint32_t n_;
  Bitness bitness_;
  Vocabulary vocabulary_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::unordered_map<NGramKey, std::vector<std::pair<std::uint32_t, std::uint64_t>>> acc_;
  std::vector<std::uint64_t> freq_;
};

// Databases for strictly increasing window sizes sharing one label table,
// one bitness, and one vocabulary.
class DatabaseEnsemble {
 public:
  static DatabaseEnsemble build(const Corpus& corpus,
                                std::span<const std::uint32_t> portfolio,
                                Bitness bitness, Vocabulary vocabulary,
                                unsigned threads = 1,
                                BuildCounters* counters = nullptr);
  static DatabaseEnsemble from_databases(std::vector<NGramDatabase> databases);

  static DatabaseEnsemble open(const std::filesystem::path& manifest_path);
  // Writes member databases next to the manifest and the manifest itself.
  void save(const std::filesystem::path& manifest_path) const;

  const std::vector<NGramDatabase>& databases() const { return databases_; }
  std::uint32_t n_max() const;
  Bitness bitness() const;
  Vocabulary vocabulary() const;
  std::span<const std::string> label_names() const;
  std::span<const std::uint64_t> label_frequencies() const;

 private:
  explicit DatabaseEnsemble(std::vector<NGramDatabase> databases);
  std::vector<NGramDatabase> databases_;
};

// The default portfolio.
std::vector<std::uint32_t> default_portfolio();

}  // namespace typrec
