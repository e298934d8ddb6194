#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "typrec/common.hpp"

namespace typrec {

// 64-bit hash of a normalized context token sequence. Databases are keyed on
// these values, so the hash function is part of the on-disk contract.
using NGramKey = std::uint64_t;

enum class TokenClass : std::uint8_t {
  Identifier,
  Keyword,
  Punctuation,
  Operator,
  NumberPlaceholder,
  StringPlaceholder,
  BoundarySentinel,
};

inline constexpr std::string_view kNumPlaceholder = "<NUM>";
inline constexpr std::string_view kStringPlaceholder = "<STRING>";
inline constexpr std::string_view kBosSentinel = "<BOS>";
inline constexpr std::string_view kEosSentinel = "<EOS>";

struct Token {
  std::string text;
  TokenClass cls = TokenClass::Punctuation;

  bool operator==(const Token&) const = default;
};

Token bos_token();
Token eos_token();

// Normalized token sequence for one decompiled function. `occurrences` maps
// every identifier to the stream indices where it appears, in source order.
struct TokenStream {
  std::vector<Token> tokens;
  std::unordered_map<std::string, std::vector<std::uint32_t>> occurrences;

  // Token texts joined with single spaces. Re-tokenizing the result yields
  // the same token list (placeholders are recognized on input).
  std::string joined() const;
};

// Tokenizes C-like decompiled pseudo-code. Never fails: literals become
// <NUM>/<STRING>, comments and whitespace are dropped, multi-character
// operators are emitted as single tokens, and unknown bytes fall back to
// single-character punctuation tokens.
//
// Identifier grammar: [A-Za-z_$@][A-Za-z0-9_$@]*. The placeholder spellings
// <NUM>, <STRING>, <BOS>, <EOS> are recognized verbatim so that normalized
// output re-tokenizes to itself.
TokenStream tokenize(std::string_view source);

// Balanced-parenthesis argument list following a callee token, allowing the
// closing parens of a cast between the callee and the list's opening paren.
// begin/end are stream indices of "(" and one past the matching ")".
struct ArgSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool truncated = false;  // stream ended before the list balanced
};

std::optional<ArgSpan> call_argument_span(const TokenStream& stream,
                                          std::size_t token_index);
bool is_call_occurrence(const TokenStream& stream, std::size_t token_index);

// Fixed-radius context around one identifier occurrence. After sentinel
// padding `left` holds exactly n tokens; `right` holds n tokens for variable
// windows and the full argument list plus n tokens for call windows. The
// center identifier is excluded from the hashed sequence.
struct ContextWindow {
  std::uint32_t n = 0;
  std::uint32_t occurrence_index = 0;
  std::size_t center_index = 0;
  Token center;
  std::vector<Token> left;
  std::vector<Token> right;
  NGramKey key = 0;
  bool truncated = false;
};

// One window per occurrence of `identifier`, in source order. Unknown
// identifiers yield an empty list. Requires n >= 1.
std::vector<ContextWindow> extract_variable_contexts(const TokenStream& stream,
                                                     std::string_view identifier,
                                                     std::uint32_t n);

// One window per occurrence of `callee` that is followed by an argument
// list; other occurrences are skipped. Requires n >= 0.
std::vector<ContextWindow> extract_call_contexts(const TokenStream& stream,
                                                 std::string_view callee,
                                                 std::uint32_t n);

// Incremental FNV-1a over token texts joined with a 0x1F separator byte.
// Fixed explicitly: serialized databases must be portable across builds.
class ContextHasher {
 public:
  void add(std::string_view token_text);
  NGramKey finish() const { return state_; }

 private:
  NGramKey state_ = 14695981039346656037ull;
  bool first_ = true;
};

NGramKey hash_context(std::span<const Token> tokens);
NGramKey hash_context(std::span<const std::string> texts);

// Fast paths used during indexing and inference; equal to hashing the
// corresponding extract_*_contexts window.
NGramKey variable_window_key(const TokenStream& stream, std::size_t center_index,
                             std::uint32_t n);
std::optional<NGramKey> call_window_key(const TokenStream& stream,
                                        std::size_t center_index, std::uint32_t n,
                                        bool* truncated = nullptr);

// Hash of the whole normalized stream; used for split-overlap checks and
// in-train membership.
NGramKey stream_hash(const TokenStream& stream);

}  // namespace typrec
