#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "typrec/common.hpp"

namespace typrec {

struct TypeLayoutField {
  std::string name;
  std::uint32_t offset = 0;  // bytes from start of the composite
  std::uint32_t width = 0;   // bytes
  std::string type_name;
};

// Memory shape of a composite type. Field offsets are strictly increasing
// and every field fits inside total_width. Overlapping byte ranges with
// distinct offsets are allowed (union-like layouts); duplicate offsets are
// rejected.
struct TypeLayout {
  std::uint32_t total_width = 0;
  std::vector<TypeLayoutField> fields;
};

// Fully qualified type. Struct-kind entries (struct, pointer_to_struct,
// union) always carry a layout; pointer_to_struct carries the pointee's.
// `bitness` restricts the entry to one word size; disengaged applies to both.
struct TypeLabel {
  std::string name;
  TypeKind kind = TypeKind::Other;
  std::optional<TypeLayout> layout;
  std::optional<Bitness> bitness;
};

struct SignatureParam {
  std::string name;
  std::string type_name;
};

struct SignatureLabel {
  std::string name;
  std::string function_name;  // defaults to the label name
  std::vector<SignatureParam> parameters;
  std::string return_type_name;
};

// Name -> type entries, at most one entry per (name, bitness).
class TypeLibrary {
 public:
  void insert(TypeLabel label);  // throws InputError on duplicates/conflicts
  const TypeLabel* find(std::string_view name, Bitness bitness) const;
  bool contains_name(std::string_view name) const;
  std::size_t size() const;

  const std::map<std::string, std::vector<TypeLabel>>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::vector<TypeLabel>> entries_;
};

class SignatureLibrary {
 public:
  void insert(SignatureLabel label);
  const SignatureLabel* find(std::string_view name) const;
  bool contains_name(std::string_view name) const;
  std::size_t size() const;

  const std::map<std::string, SignatureLabel>& entries() const { return entries_; }

 private:
  std::map<std::string, SignatureLabel> entries_;
};

struct AnnotatedFunction {
  std::string binary_id;
  std::uint64_t address = 0;
  Bitness bitness = Bitness::Bits64;
  std::string source_text;
  // identifier -> fully qualified type name
  std::map<std::string, std::string> variable_annotations;
  // callee identifier -> signature label name
  std::map<std::string, std::string> call_annotations;
  Split split = Split::Train;
  std::optional<std::string> opt_level;  // e.g. "O2"; used for grouped reports
};

struct Corpus {
  std::vector<AnnotatedFunction> functions;
  TypeLibrary type_library;
  SignatureLibrary signature_library;

  const AnnotatedFunction* find_function(std::string_view binary_id,
                                         std::uint64_t address) const;
};

TypeLibrary load_type_library(const std::filesystem::path& path);
SignatureLibrary load_signature_library(const std::filesystem::path& path);

// Loads and fully validates a corpus: annotations resolve in the matching
// library for the function's bitness, annotated identifiers occur in the
// code, (binary_id, address) pairs are unique, and the two label
// vocabularies are disjoint.
Corpus load_corpus(const std::filesystem::path& corpus_path, TypeLibrary types,
                   SignatureLibrary signatures = {});
Corpus load_corpus(const std::filesystem::path& corpus_path,
                   const std::filesystem::path& type_library_path,
                   const std::optional<std::filesystem::path>& signature_library_path = {});

// Re-validates an in-memory corpus against the same rules the loader applies.
void validate_corpus(const Corpus& corpus);

void save_corpus(const Corpus& corpus, const std::filesystem::path& corpus_path,
                 const std::filesystem::path& type_library_path,
                 const std::filesystem::path& signature_library_path);

struct SplitOverlap {
  Split a = Split::Train;
  Split b = Split::Test;
  std::size_t functions_a = 0;
  std::size_t functions_b = 0;
  std::size_t matches_a = 0;  // functions in a whose stream hash occurs in b
  std::size_t matches_b = 0;
  // Symmetric: (matches_a + matches_b) / (functions_a + functions_b).
  double overlap = 0.0;
  // Directional convenience ratio: matches_b / functions_b.
  double fraction_of_b_in_a = 0.0;
};

struct SplitReport {
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
  std::size_t test_count = 0;
  std::vector<SplitOverlap> overlaps;  // train/val, train/test, val/test

  const SplitOverlap* pair(Split a, Split b) const;
};

// Reports per-split counts and pairwise overlap, where two functions overlap
// iff their normalized token streams hash equal.
SplitReport validate_splits(const Corpus& corpus);

std::string render_text(const SplitReport& report);

// "0x1a2b"-style formatting used by all file formats.
std::string address_to_hex(std::uint64_t address);
std::optional<std::uint64_t> parse_hex_address(std::string_view text);

}  // namespace typrec
