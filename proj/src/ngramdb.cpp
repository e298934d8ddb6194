#include "typrec/ngramdb.hpp"

#include <algorithm>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <limits>
#include <sys/mman.h>
#include <sys/stat.h>
#include <thread>
#include <unistd.h>

#include "json.hpp"

namespace typrec {

namespace {

constexpr char kMagic[8] = {'N', 'G', 'R', 'A', 'M', 'T', 'D', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

// Payload checksums are verified during open only while that stays cheap;
// beyond this limit open performs structural checks and verify_payload()
// covers the full scan on demand.
constexpr std::uint64_t kEagerVerifyLimit = 256ull * 1024 * 1024;

struct FileHeader {
  char magic[8];
  std::uint32_t version;
  std::uint32_t n;
  std::uint32_t bitness;
  std::uint32_t vocabulary;
  std::uint64_t key_count;
  std::uint64_t pair_count;
  std::uint64_t label_count;
  std::uint64_t index_offset;
  std::uint64_t pairs_offset;
  std::uint64_t labels_offset;
  std::uint64_t labels_size;
  std::uint64_t freqs_offset;
  std::uint64_t file_size;
  std::uint64_t payload_checksum;  // FNV-1a over [index_offset, file_size)
};
static_assert(sizeof(FileHeader) == 104);

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

class Fnv64 {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t s = state_;
    for (std::size_t i = 0; i < size; ++i) {
      s ^= bytes[i];
      s *= kFnvPrime;
    }
    state_ = s;
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kFnvOffset;
};

std::uint64_t align8(std::uint64_t offset) { return (offset + 7) & ~7ull; }

std::uint32_t saturate32(std::uint64_t value) {
  return value > std::numeric_limits<std::uint32_t>::max()
             ? std::numeric_limits<std::uint32_t>::max()
             : static_cast<std::uint32_t>(value);
}

}  // namespace

class MappedFile {
 public:
  static std::shared_ptr<MappedFile> open(const std::filesystem::path& path) {
    int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw InputError("cannot open " + path.string());
    struct stat st{};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw InputError("cannot stat " + path.string());
    }
    std::size_t size = static_cast<std::size_t>(st.st_size);
    void* data = nullptr;
    if (size > 0) {
      data = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE, fd, 0);
      if (data == MAP_FAILED) {
        ::close(fd);
        throw InputError("cannot map " + path.string());
      }
    }
    ::close(fd);
    return std::shared_ptr<MappedFile>(new MappedFile(data, size));
  }

  ~MappedFile() {
    if (data_ != nullptr && size_ > 0) ::munmap(data_, size_);
  }

  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  const std::byte* data() const { return static_cast<const std::byte*>(data_); }
  std::size_t size() const { return size_; }

 private:
  MappedFile(void* data, std::size_t size) : data_(data), size_(size) {}
  void* data_;
  std::size_t size_;
};

NGramBuilder::NGramBuilder(std::uint32_t n, Bitness bitness, Vocabulary vocabulary)
    : n_(n), bitness_(bitness), vocabulary_(vocabulary) {
  if (n == 0) throw InputError("window radius must be >= 1");
}

std::uint32_t NGramBuilder::intern(std::string_view label) {
  auto it = ids_.find(std::string(label));
  if (it != ids_.end()) return it->second;
  std::uint32_t id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(label);
  freq_.push_back(0);
  ids_.emplace(names_.back(), id);
  return id;
}

void NGramBuilder::add(NGramKey key, std::string_view label, std::uint64_t count) {
  std::uint32_t id = intern(label);
  auto& pairs = acc_[key];
  for (auto& [existing, existing_count] : pairs) {
    if (existing == id) {
      existing_count += count;
      return;
    }
  }
  pairs.emplace_back(id, count);
}

void NGramBuilder::add_label_frequency(std::string_view label, std::uint64_t count) {
  freq_[intern(label)] += count;
}

NGramDatabase NGramBuilder::freeze() && {
  NGramDatabase db;
  db.n_ = n_;
  db.bitness_ = bitness_;
  db.vocabulary_ = vocabulary_;

  // Canonical dense ids follow lexicographic label order, which makes builds
  // and merges reproduce bit-identical databases regardless of insertion or
  // argument order.
  std::vector<std::uint32_t> order(names_.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [this](std::uint32_t a, std::uint32_t b) {
    return names_[a] < names_[b];
  });
  std::vector<std::uint32_t> remap(names_.size());
  db.labels_.resize(names_.size());
  db.freqs_.resize(names_.size());
  for (std::uint32_t rank = 0; rank < order.size(); ++rank) {
    std::uint32_t old = order[rank];
    remap[old] = rank;
    db.labels_[rank] = std::move(names_[old]);
    db.freqs_[rank] = freq_[old];
    db.label_ids_.emplace(db.labels_[rank], rank);
  }

  std::vector<NGramKey> keys;
  keys.reserve(acc_.size());
  for (const auto& [key, _] : acc_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  db.owned_index_.reserve(keys.size());
  std::vector<LabelCount> scratch;
  for (NGramKey key : keys) {
    auto node = acc_.find(key);
    scratch.clear();
    for (const auto& [old_id, count] : node->second) {
      scratch.push_back(LabelCount{remap[old_id], saturate32(count)});
    }
    std::sort(scratch.begin(), scratch.end(),
              [](const LabelCount& a, const LabelCount& b) {
                if (a.count != b.count) return a.count > b.count;
                return a.label_id < b.label_id;
              });
    NGramDatabase::KeyEntry entry;
    entry.key = key;
    entry.pair_offset = db.owned_pairs_.size();
    entry.pair_count = static_cast<std::uint32_t>(scratch.size());
    db.owned_index_.push_back(entry);
    db.owned_pairs_.insert(db.owned_pairs_.end(), scratch.begin(), scratch.end());
    acc_.erase(node);  // release accumulation memory as we go
  }

  db.index_ = db.owned_index_;
  db.pairs_ = db.owned_pairs_;
  db.checksum_verified_ = true;
  return db;
}

namespace {

void index_function(NGramBuilder& builder, const AnnotatedFunction& fn,
                    const Corpus& corpus, std::uint32_t n, Bitness bitness,
                    Vocabulary vocabulary, BuildCounters& counters) {
  const auto& annotations = vocabulary == Vocabulary::Types
                                ? fn.variable_annotations
                                : fn.call_annotations;
  if (annotations.empty()) return;
  TokenStream stream = tokenize(fn.source_text);
  for (const auto& [identifier, label] : annotations) {
    bool resolved = vocabulary == Vocabulary::Types
                        ? corpus.type_library.find(label, bitness) != nullptr
                        : corpus.signature_library.find(label) != nullptr;
    if (!resolved) {
      bool other = vocabulary == Vocabulary::Types
                       ? corpus.signature_library.contains_name(label)
                       : corpus.type_library.contains_name(label);
      if (other) {
        ++counters.skipped_other_vocabulary;
      } else {
        ++counters.skipped_unresolved;
      }
      continue;
    }
    auto it = stream.occurrences.find(identifier);
    if (it == stream.occurrences.end()) continue;
    for (std::uint32_t index : it->second) {
      if (vocabulary == Vocabulary::Types) {
        builder.add(variable_window_key(stream, index, n), label);
      } else {
        auto key = call_window_key(stream, index, n);
        if (!key) continue;  // occurrence is not a call site
        builder.add(*key, label);
      }
      builder.add_label_frequency(label, 1);
      ++counters.indexed_occurrences;
    }
  }
}

NGramDatabase build_from_functions(std::span<const AnnotatedFunction* const> functions,
                                   const Corpus& corpus, std::uint32_t n,
                                   Bitness bitness, Vocabulary vocabulary,
                                   BuildCounters& counters) {
  NGramBuilder builder(n, bitness, vocabulary);
  for (const AnnotatedFunction* fn : functions) {
    index_function(builder, *fn, corpus, n, bitness, vocabulary, counters);
  }
  return std::move(builder).freeze();
}

std::vector<const AnnotatedFunction*> effective_functions(const Corpus& corpus,
                                                          Bitness bitness) {
  std::vector<const AnnotatedFunction*> out;
  for (const AnnotatedFunction& fn : corpus.functions) {
    if (fn.split == Split::Train && fn.bitness == bitness) out.push_back(&fn);
  }
  return out;
}

}  // namespace

NGramDatabase NGramDatabase::build(const Corpus& corpus, std::uint32_t n,
                                   Bitness bitness, Vocabulary vocabulary,
                                   BuildCounters* counters) {
  auto functions = effective_functions(corpus, bitness);
  if (functions.empty()) {
    throw InputError("no train-split functions with bitness " +
                     std::string(to_string(bitness)));
  }
  BuildCounters local;
  NGramDatabase db =
      build_from_functions(functions, corpus, n, bitness, vocabulary, local);
  if (counters) *counters = local;
  return db;
}

NGramDatabase NGramDatabase::build_parallel(const Corpus& corpus, std::uint32_t n,
                                            Bitness bitness, Vocabulary vocabulary,
                                            unsigned threads,
                                            BuildCounters* counters) {
  auto functions = effective_functions(corpus, bitness);
  if (functions.empty()) {
    throw InputError("no train-split functions with bitness " +
                     std::string(to_string(bitness)));
  }
  if (threads <= 1 || functions.size() < 2) {
    return build(corpus, n, bitness, vocabulary, counters);
  }

  // One shard per batch of binaries; the deterministic partition keeps the
  // merged result independent of scheduling.
  std::vector<std::string> binaries;
  for (const auto* fn : functions) binaries.push_back(fn->binary_id);
  std::sort(binaries.begin(), binaries.end());
  binaries.erase(std::unique(binaries.begin(), binaries.end()), binaries.end());

  unsigned shard_count =
      std::min<unsigned>(threads, static_cast<unsigned>(binaries.size()));
  std::unordered_map<std::string_view, unsigned> shard_of;
  for (std::size_t i = 0; i < binaries.size(); ++i) {
    shard_of.emplace(binaries[i], static_cast<unsigned>(i % shard_count));
  }
  std::vector<std::vector<const AnnotatedFunction*>> shards(shard_count);
  for (const auto* fn : functions) {
    shards[shard_of.at(fn->binary_id)].push_back(fn);
  }

  std::vector<std::optional<NGramDatabase>> built(shard_count);
  std::vector<BuildCounters> shard_counters(shard_count);
  std::vector<std::thread> workers;
  for (unsigned s = 0; s < shard_count; ++s) {
    workers.emplace_back([&, s] {
      built[s] = build_from_functions(shards[s], corpus, n, bitness, vocabulary,
                                      shard_counters[s]);
    });
  }
  for (auto& w : workers) w.join();

  if (counters) {
    BuildCounters total;
    for (const auto& c : shard_counters) {
      total.indexed_occurrences += c.indexed_occurrences;
      total.skipped_other_vocabulary += c.skipped_other_vocabulary;
      total.skipped_unresolved += c.skipped_unresolved;
    }
    *counters = total;
  }

  // Pairwise reduction.
  std::vector<NGramDatabase> round;
  for (auto& db : built) round.push_back(std::move(*db));
  while (round.size() > 1) {
    std::vector<NGramDatabase> next;
    for (std::size_t i = 0; i + 1 < round.size(); i += 2) {
      next.push_back(merge_databases(round[i], round[i + 1]));
    }
    if (round.size() % 2 == 1) next.push_back(std::move(round.back()));
    round = std::move(next);
  }
  return std::move(round.front());
}

NGramDatabase merge_databases(const NGramDatabase& a, const NGramDatabase& b) {
  if (a.n() != b.n() || a.bitness() != b.bitness() ||
      a.vocabulary() != b.vocabulary()) {
    throw InputError("cannot merge databases with different n, bitness, or vocabulary");
  }
  NGramBuilder builder(a.n(), a.bitness(), a.vocabulary());
  for (const NGramDatabase* db : {&a, &b}) {
    for (const auto& entry : db->key_index()) {
      for (const LabelCount& pair : db->pairs(entry)) {
        builder.add(entry.key, db->label_name(pair.label_id), pair.count);
      }
    }
    auto names = db->label_names();
    auto freqs = db->label_frequencies();
    for (std::size_t i = 0; i < names.size(); ++i) {
      builder.add_label_frequency(names[i], freqs[i]);
    }
  }
  return std::move(builder).freeze();
}

std::uint64_t NGramDatabase::key_count() const { return index_.size(); }

std::string_view NGramDatabase::label_name(std::uint32_t label_id) const {
  if (label_id >= labels_.size()) throw InternalError("label id out of range");
  return labels_[label_id];
}

std::optional<std::uint32_t> NGramDatabase::label_id(std::string_view name) const {
  auto it = label_ids_.find(std::string(name));
  if (it == label_ids_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t NGramDatabase::global_label_frequency(std::uint32_t label_id) const {
  if (label_id >= freqs_.size()) throw InternalError("label id out of range");
  return freqs_[label_id];
}

std::span<const LabelCount> NGramDatabase::pairs(const KeyEntry& entry) const {
  if (entry.pair_offset + entry.pair_count > pairs_.size()) {
    throw InputError("database entry points outside the pair arena");
  }
  return pairs_.subspan(entry.pair_offset, entry.pair_count);
}

QueryResult NGramDatabase::query(NGramKey key, std::uint32_t k) const {
  if (k < 1) throw InputError("query k must be >= 1");
  QueryResult result;
  result.key = key;
  result.n = n_;
  auto it = std::lower_bound(index_.begin(), index_.end(), key,
                             [](const KeyEntry& entry, NGramKey value) {
                               return entry.key < value;
                             });
  if (it == index_.end() || it->key != key) return result;
  auto stored = pairs(*it);
  result.distinct_label_count = it->pair_count;
  std::size_t take = std::min<std::size_t>(k, stored.size());
  result.candidates.assign(stored.begin(), stored.begin() + take);
  return result;
}

namespace {

std::uint64_t labels_blob_size(std::span<const std::string> labels) {
  std::uint64_t size = 0;
  for (const auto& name : labels) size += 4 + name.size();
  return size;
}

}  // namespace

void NGramDatabase::serialize(const std::filesystem::path& path) const {
  FileHeader header{};
  std::memcpy(header.magic, kMagic, sizeof(kMagic));
  header.version = kFormatVersion;
  header.n = n_;
  header.bitness = static_cast<std::uint32_t>(bitness_);
  header.vocabulary = static_cast<std::uint32_t>(vocabulary_);
  header.key_count = index_.size();
  header.pair_count = pairs_.size();
  header.label_count = labels_.size();
  header.index_offset = sizeof(FileHeader);
  header.pairs_offset = header.index_offset + header.key_count * sizeof(KeyEntry);
  header.labels_offset = header.pairs_offset + header.pair_count * sizeof(LabelCount);
  header.labels_size = labels_blob_size(labels_);
  header.freqs_offset = align8(header.labels_offset + header.labels_size);
  header.file_size = header.freqs_offset + header.label_count * sizeof(std::uint64_t);

  std::string labels_blob;
  labels_blob.reserve(header.labels_size);
  for (const auto& name : labels_) {
    std::uint32_t len = static_cast<std::uint32_t>(name.size());
    labels_blob.append(reinterpret_cast<const char*>(&len), sizeof(len));
    labels_blob.append(name);
  }
  std::string labels_pad(header.freqs_offset - header.labels_offset -
                             header.labels_size,
                         '\0');

  Fnv64 checksum;
  checksum.update(index_.data(), index_.size() * sizeof(KeyEntry));
  checksum.update(pairs_.data(), pairs_.size() * sizeof(LabelCount));
  checksum.update(labels_blob.data(), labels_blob.size());
  checksum.update(labels_pad.data(), labels_pad.size());
  checksum.update(freqs_.data(), freqs_.size() * sizeof(std::uint64_t));
  header.payload_checksum = checksum.digest();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(&header), sizeof(header));
  out.write(reinterpret_cast<const char*>(index_.data()),
            static_cast<std::streamsize>(index_.size() * sizeof(KeyEntry)));
  out.write(reinterpret_cast<const char*>(pairs_.data()),
            static_cast<std::streamsize>(pairs_.size() * sizeof(LabelCount)));
  out.write(labels_blob.data(), static_cast<std::streamsize>(labels_blob.size()));
  out.write(labels_pad.data(), static_cast<std::streamsize>(labels_pad.size()));
  out.write(reinterpret_cast<const char*>(freqs_.data()),
            static_cast<std::streamsize>(freqs_.size() * sizeof(std::uint64_t)));
  if (!out) throw InputError("write failed for " + path.string());
}

NGramDatabase NGramDatabase::open_mapped(const std::filesystem::path& path) {
  auto mapping = MappedFile::open(path);
  if (mapping->size() < sizeof(FileHeader)) {
    throw InputError(path.string() + ": truncated database file");
  }
  FileHeader header;
  std::memcpy(&header, mapping->data(), sizeof(header));
  if (std::memcmp(header.magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError(path.string() + ": not a database file");
  }
  if (header.version != kFormatVersion) {
    throw InputError(path.string() + ": unsupported format version " +
                     std::to_string(header.version));
  }
  auto bitness = parse_bitness(header.bitness);
  if (!bitness || header.vocabulary > 1) {
    throw InputError(path.string() + ": corrupt header fields");
  }
  if (header.file_size != mapping->size()) {
    throw InputError(path.string() + ": truncated database file");
  }
  std::uint64_t index_end = header.index_offset + header.key_count * sizeof(KeyEntry);
  std::uint64_t pairs_end = header.pairs_offset + header.pair_count * sizeof(LabelCount);
  std::uint64_t labels_end = header.labels_offset + header.labels_size;
  std::uint64_t freqs_end =
      header.freqs_offset + header.label_count * sizeof(std::uint64_t);
  bool layout_ok = header.index_offset == sizeof(FileHeader) &&
                   index_end == header.pairs_offset &&
                   pairs_end == header.labels_offset &&
                   labels_end <= header.freqs_offset &&
                   header.freqs_offset == align8(labels_end) &&
                   freqs_end == header.file_size;
  if (!layout_ok) {
    throw InputError(path.string() + ": inconsistent section layout");
  }

  NGramDatabase db;
  db.n_ = header.n;
  db.bitness_ = *bitness;
  db.vocabulary_ = static_cast<Vocabulary>(header.vocabulary);
  db.mapping_ = mapping;
  db.file_size_ = header.file_size;
  db.stored_checksum_ = header.payload_checksum;

  const std::byte* base = mapping->data();
  db.index_ = std::span<const KeyEntry>(
      reinterpret_cast<const KeyEntry*>(base + header.index_offset),
      header.key_count);
  db.pairs_ = std::span<const LabelCount>(
      reinterpret_cast<const LabelCount*>(base + header.pairs_offset),
      header.pair_count);

  // Labels and frequencies are decoded eagerly; they are small next to the
  // index and pair arenas, which stay untouched until queried.
  const std::byte* cursor = base + header.labels_offset;
  const std::byte* labels_limit = base + labels_end;
  db.labels_.reserve(header.label_count);
  for (std::uint64_t i = 0; i < header.label_count; ++i) {
    if (cursor + 4 > labels_limit) {
      throw InputError(path.string() + ": corrupt label table");
    }
    std::uint32_t len;
    std::memcpy(&len, cursor, sizeof(len));
    cursor += 4;
    if (cursor + len > labels_limit) {
      throw InputError(path.string() + ": corrupt label table");
    }
    db.labels_.emplace_back(reinterpret_cast<const char*>(cursor), len);
    cursor += len;
  }
  if (cursor != labels_limit) {
    throw InputError(path.string() + ": corrupt label table");
  }
  for (std::uint32_t i = 0; i < db.labels_.size(); ++i) {
    if (!db.label_ids_.emplace(db.labels_[i], i).second) {
      throw InputError(path.string() + ": duplicate label in table");
    }
  }
  db.freqs_.resize(header.label_count);
  std::memcpy(db.freqs_.data(), base + header.freqs_offset,
              header.label_count * sizeof(std::uint64_t));

  std::uint64_t payload_size = header.file_size - header.index_offset;
  if (payload_size <= kEagerVerifyLimit) {
    if (!db.verify_payload()) {
      throw InputError(path.string() + ": payload checksum mismatch");
    }
  }
  return db;
}

bool NGramDatabase::verify_payload() const {
  if (!mapping_) return true;  // owned databases are authoritative
  Fnv64 checksum;
  checksum.update(mapping_->data() + sizeof(FileHeader),
                  file_size_ - sizeof(FileHeader));
  bool ok = checksum.digest() == stored_checksum_;
  checksum_verified_ = ok;
  return ok;
}

DbStats NGramDatabase::stats() const {
  DbStats s;
  s.key_count = index_.size();
  s.label_count = labels_.size();
  s.pair_count = pairs_.size();
  std::uint64_t blob = labels_blob_size(labels_);
  std::uint64_t labels_end = sizeof(FileHeader) + s.key_count * sizeof(KeyEntry) +
                             s.pair_count * sizeof(LabelCount) + blob;
  s.on_disk_bytes = align8(labels_end) + s.label_count * sizeof(std::uint64_t);
  s.resident_bytes = blob + freqs_.size() * sizeof(std::uint64_t);
  if (!mapping_) {
    s.resident_bytes += owned_index_.size() * sizeof(KeyEntry) +
                        owned_pairs_.size() * sizeof(LabelCount);
  }
  s.mean_labels_per_key =
      s.key_count == 0 ? 0.0
                       : static_cast<double>(s.pair_count) /
                             static_cast<double>(s.key_count);
  return s;
}

DatabaseEnsemble::DatabaseEnsemble(std::vector<NGramDatabase> databases)
    : databases_(std::move(databases)) {
  if (databases_.empty()) {
    throw InputError("ensemble requires at least one database");
  }
  for (std::size_t i = 0; i < databases_.size(); ++i) {
    const auto& db = databases_[i];
    if (db.bitness() != databases_.front().bitness() ||
        db.vocabulary() != databases_.front().vocabulary()) {
      throw InputError("ensemble members disagree on bitness or vocabulary");
    }
    if (i > 0 && db.n() <= databases_[i - 1].n()) {
      throw InputError("ensemble window sizes must be strictly increasing");
    }
    if (db.label_names().size() != databases_.front().label_names().size() ||
        !std::equal(db.label_names().begin(), db.label_names().end(),
                    databases_.front().label_names().begin())) {
      throw InputError("ensemble members must share one label table");
    }
  }
}

DatabaseEnsemble DatabaseEnsemble::from_databases(std::vector<NGramDatabase> databases) {
  std::sort(databases.begin(), databases.end(),
            [](const NGramDatabase& a, const NGramDatabase& b) {
              return a.n() < b.n();
            });
  return DatabaseEnsemble(std::move(databases));
}

DatabaseEnsemble DatabaseEnsemble::build(const Corpus& corpus,
                                         std::span<const std::uint32_t> portfolio,
                                         Bitness bitness, Vocabulary vocabulary,
                                         unsigned threads, BuildCounters* counters) {
  if (portfolio.empty()) throw InputError("portfolio must not be empty");
  for (std::size_t i = 1; i < portfolio.size(); ++i) {
    if (portfolio[i] <= portfolio[i - 1]) {
      throw InputError("portfolio window sizes must be strictly increasing");
    }
  }
  std::vector<NGramDatabase> dbs;
  BuildCounters first;
  for (std::size_t i = 0; i < portfolio.size(); ++i) {
    dbs.push_back(NGramDatabase::build_parallel(corpus, portfolio[i], bitness,
                                                vocabulary, threads,
                                                i == 0 ? &first : nullptr));
  }
  if (counters) *counters = first;
  return DatabaseEnsemble(std::move(dbs));
}

std::uint32_t DatabaseEnsemble::n_max() const { return databases_.back().n(); }
Bitness DatabaseEnsemble::bitness() const { return databases_.front().bitness(); }
Vocabulary DatabaseEnsemble::vocabulary() const {
  return databases_.front().vocabulary();
}
std::span<const std::string> DatabaseEnsemble::label_names() const {
  return databases_.front().label_names();
}
std::span<const std::uint64_t> DatabaseEnsemble::label_frequencies() const {
  return databases_.front().label_frequencies();
}

void DatabaseEnsemble::save(const std::filesystem::path& manifest_path) const {
  std::filesystem::path dir = manifest_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["format_version"] = kFormatVersion;
  manifest["bitness"] = static_cast<std::uint32_t>(bitness());
  manifest["vocabulary"] = std::string(to_string(vocabulary()));
  nlohmann::ordered_json members = nlohmann::ordered_json::array();
  for (const NGramDatabase& db : databases_) {
    std::string file_name = "db_" + std::string(to_string(vocabulary())) + "_" +
                            std::string(to_string(bitness())) + "_n" +
                            std::to_string(db.n()) + ".ngdb";
    db.serialize(dir / file_name);
    members.push_back({{"n", db.n()}, {"path", file_name}});
  }
  manifest["databases"] = members;
  std::ofstream out(manifest_path);
  if (!out) throw InputError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << "\n";
}

DatabaseEnsemble DatabaseEnsemble::open(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InputError("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(manifest_path.string() + ": parse error: " + e.what());
  }
  if (manifest.value("format_version", 0u) != kFormatVersion) {
    throw InputError(manifest_path.string() + ": unsupported format version");
  }
  auto bitness = parse_bitness(manifest.at("bitness").get<std::uint64_t>());
  auto vocabulary = parse_vocabulary(manifest.at("vocabulary").get<std::string>());
  if (!bitness || !vocabulary) {
    throw InputError(manifest_path.string() + ": corrupt manifest fields");
  }
  std::filesystem::path dir = manifest_path.parent_path();
  std::vector<NGramDatabase> dbs;
  for (const auto& member : manifest.at("databases")) {
    auto db = NGramDatabase::open_mapped(dir / member.at("path").get<std::string>());
    if (db.n() != member.at("n").get<std::uint32_t>()) {
      throw InputError(manifest_path.string() + ": manifest n mismatch for " +
                       member.at("path").get<std::string>());
    }
    if (db.bitness() != *bitness || db.vocabulary() != *vocabulary) {
      throw InputError(manifest_path.string() +
                       ": member database disagrees with manifest");
    }
    dbs.push_back(std::move(db));
  }
  return DatabaseEnsemble(std::move(dbs));
}

std::vector<std::uint32_t> default_portfolio() { return {2, 4, 8, 12, 48}; }

}  // namespace typrec
