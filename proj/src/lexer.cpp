#include "typrec/lexer.hpp"

#include <array>
#include <cassert>
#include <cctype>
#include <unordered_set>

namespace typrec {

namespace {

constexpr NGramKey kFnvPrime = 1099511628211ull;
constexpr unsigned char kTokenSeparator = 0x1f;

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
         c == '@';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
         c == '@';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> kw = {
      "auto", "break", "case", "char", "const", "continue", "default", "do",
      "double", "else", "enum", "extern", "float", "for", "goto", "if",
      "inline", "int", "long", "register", "restrict", "return", "short",
      "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
      "unsigned", "void", "volatile", "while", "_Bool", "bool", "true",
      "false",
      // decompiler calling-convention annotations
      "__cdecl", "__stdcall", "__fastcall", "__thiscall", "__usercall",
      "__userpurge", "__noreturn", "__far", "__near",
  };
  return kw;
}

// Longest-match operator tables; single characters are handled separately.
constexpr std::array<std::string_view, 3> kOps3 = {"<<=", ">>=", "..."};
constexpr std::array<std::string_view, 20> kOps2 = {
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::"};

bool is_single_operator(char c) {
  switch (c) {
    case '+': case '-': case '*': case '/': case '%': case '=':
    case '<': case '>': case '!': case '&': case '|': case '^':
    case '~': case '?': case '.':
      return true;
    default:
      return false;
  }
}

// Recognize literal placeholder spellings so normalized output re-tokenizes
// to the identical token list.
std::optional<Token> match_placeholder(std::string_view rest) {
  if (rest.starts_with(kNumPlaceholder))
    return Token{std::string(kNumPlaceholder), TokenClass::NumberPlaceholder};
  if (rest.starts_with(kStringPlaceholder))
    return Token{std::string(kStringPlaceholder), TokenClass::StringPlaceholder};
  if (rest.starts_with(kBosSentinel))
    return Token{std::string(kBosSentinel), TokenClass::BoundarySentinel};
  if (rest.starts_with(kEosSentinel))
    return Token{std::string(kEosSentinel), TokenClass::BoundarySentinel};
  return std::nullopt;
}

// A C-style "preprocessing number": digits interleaved with identifier
// characters, dots, and signed exponents. Covers hex, octal, float, and
// suffixed literals in one rule.
std::size_t scan_number(std::string_view s, std::size_t i) {
  std::size_t j = i + 1;
  while (j < s.size()) {
    char c = s[j];
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      ++j;
      continue;
    }
    if ((c == '+' || c == '-') && j > i) {
      char prev = s[j - 1];
      if (prev == 'e' || prev == 'E' || prev == 'p' || prev == 'P') {
        ++j;
        continue;
      }
    }
    break;
  }
  return j;
}

std::size_t scan_quoted(std::string_view s, std::size_t i, char quote) {
  std::size_t j = i + 1;
  while (j < s.size()) {
    if (s[j] == '\\' && j + 1 < s.size()) {
      j += 2;
      continue;
    }
    if (s[j] == quote) return j + 1;
    ++j;
  }
  return j;  // unterminated: consume the rest
}

}  // namespace

Token bos_token() { return Token{std::string(kBosSentinel), TokenClass::BoundarySentinel}; }
Token eos_token() { return Token{std::string(kEosSentinel), TokenClass::BoundarySentinel}; }

std::string TokenStream::joined() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i != 0) out.push_back(' ');
    out += tokens[i].text;
  }
  return out;
}

TokenStream tokenize(std::string_view source) {
  TokenStream stream;
  auto emit = [&stream](std::string text, TokenClass cls) {
    if (cls == TokenClass::Identifier) {
      stream.occurrences[text].push_back(
          static_cast<std::uint32_t>(stream.tokens.size()));
    }
    stream.tokens.push_back(Token{std::move(text), cls});
  };

  std::size_t i = 0;
  const std::size_t size = source.size();
  while (i < size) {
    char c = source[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < size && source[i + 1] == '/') {
      while (i < size && source[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < size && source[i + 1] == '*') {
      i += 2;
      while (i + 1 < size && !(source[i] == '*' && source[i + 1] == '/')) ++i;
      i = i + 1 < size ? i + 2 : size;
      continue;
    }
    if (c == '<') {
      if (auto placeholder = match_placeholder(source.substr(i))) {
        i += placeholder->text.size();
        emit(std::move(placeholder->text), placeholder->cls);
        continue;
      }
    }
    if (is_ident_start(c)) {
      std::size_t j = i + 1;
      while (j < size && is_ident_char(source[j])) ++j;
      std::string text(source.substr(i, j - i));
      TokenClass cls = keywords().contains(text) ? TokenClass::Keyword
                                                 : TokenClass::Identifier;
      emit(std::move(text), cls);
      i = j;
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < size && is_digit(source[i + 1]))) {
      i = scan_number(source, i);
      emit(std::string(kNumPlaceholder), TokenClass::NumberPlaceholder);
      continue;
    }
    if (c == '"') {
      i = scan_quoted(source, i, '"');
      emit(std::string(kStringPlaceholder), TokenClass::StringPlaceholder);
      continue;
    }
    if (c == '\'') {
      i = scan_quoted(source, i, '\'');
      emit(std::string(kNumPlaceholder), TokenClass::NumberPlaceholder);
      continue;
    }
    std::string_view rest = source.substr(i);
    bool matched = false;
    for (std::string_view op : kOps3) {
      if (rest.starts_with(op)) {
        emit(std::string(op), TokenClass::Operator);
        i += op.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    for (std::string_view op : kOps2) {
      if (rest.starts_with(op)) {
        emit(std::string(op), TokenClass::Operator);
        i += op.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    TokenClass cls =
        is_single_operator(c) ? TokenClass::Operator : TokenClass::Punctuation;
    emit(std::string(1, c), cls);
    ++i;
  }
  return stream;
}

std::optional<ArgSpan> call_argument_span(const TokenStream& stream,
                                          std::size_t token_index) {
  const auto& tokens = stream.tokens;
  std::size_t j = token_index + 1;
  // Skip closing parens of casts wrapping the callee, e.g. "(*(f))(x)".
  while (j < tokens.size() && tokens[j].text == ")") ++j;
  if (j >= tokens.size() || tokens[j].text != "(") return std::nullopt;
  int depth = 0;
  for (std::size_t k = j; k < tokens.size(); ++k) {
    if (tokens[k].text == "(") {
      ++depth;
    } else if (tokens[k].text == ")") {
      --depth;
      if (depth == 0) return ArgSpan{j, k + 1, false};
    }
  }
  return ArgSpan{j, tokens.size(), true};
}

bool is_call_occurrence(const TokenStream& stream, std::size_t token_index) {
  return call_argument_span(stream, token_index).has_value();
}

void ContextHasher::add(std::string_view token_text) {
  auto step = [this](unsigned char byte) {
    state_ ^= byte;
    state_ *= kFnvPrime;
  };
  if (!first_) step(kTokenSeparator);
  first_ = false;
  for (char c : token_text) step(static_cast<unsigned char>(c));
}

NGramKey hash_context(std::span<const Token> tokens) {
  if (tokens.empty()) throw InputError("hash_context: empty token sequence");
  ContextHasher hasher;
  for (const Token& t : tokens) hasher.add(t.text);
  return hasher.finish();
}

NGramKey hash_context(std::span<const std::string> texts) {
  if (texts.empty()) throw InputError("hash_context: empty token sequence");
  ContextHasher hasher;
  for (const std::string& t : texts) hasher.add(t);
  return hasher.finish();
}

NGramKey variable_window_key(const TokenStream& stream, std::size_t center_index,
                             std::uint32_t n) {
  assert(n >= 1);
  const auto& tokens = stream.tokens;
  ContextHasher hasher;
  for (std::int64_t i = static_cast<std::int64_t>(center_index) - n;
       i < static_cast<std::int64_t>(center_index); ++i) {
    hasher.add(i < 0 ? kBosSentinel : std::string_view(tokens[i].text));
  }
  for (std::size_t i = center_index + 1; i <= center_index + n; ++i) {
    hasher.add(i < tokens.size() ? std::string_view(tokens[i].text) : kEosSentinel);
  }
  return hasher.finish();
}

std::optional<NGramKey> call_window_key(const TokenStream& stream,
                                        std::size_t center_index, std::uint32_t n,
                                        bool* truncated) {
  auto span = call_argument_span(stream, center_index);
  if (!span) return std::nullopt;
  if (truncated) *truncated = span->truncated;
  const auto& tokens = stream.tokens;
  ContextHasher hasher;
  for (std::int64_t i = static_cast<std::int64_t>(center_index) - n;
       i < static_cast<std::int64_t>(center_index); ++i) {
    hasher.add(i < 0 ? kBosSentinel : std::string_view(tokens[i].text));
  }
  for (std::size_t i = span->begin; i < span->end; ++i) hasher.add(tokens[i].text);
  for (std::size_t i = span->end; i < span->end + n; ++i) {
    hasher.add(i < tokens.size() ? std::string_view(tokens[i].text) : kEosSentinel);
  }
  return hasher.finish();
}

namespace {

ContextWindow make_variable_window(const TokenStream& stream, std::size_t center,
                                   std::uint32_t occurrence, std::uint32_t n) {
  const auto& tokens = stream.tokens;
  ContextWindow window;
  window.n = n;
  window.occurrence_index = occurrence;
  window.center_index = center;
  window.center = tokens[center];
  for (std::int64_t i = static_cast<std::int64_t>(center) - n;
       i < static_cast<std::int64_t>(center); ++i) {
    window.left.push_back(i < 0 ? bos_token() : tokens[i]);
  }
  for (std::size_t i = center + 1; i <= center + n; ++i) {
    window.right.push_back(i < tokens.size() ? tokens[i] : eos_token());
  }
  ContextHasher hasher;
  for (const Token& t : window.left) hasher.add(t.text);
  for (const Token& t : window.right) hasher.add(t.text);
  window.key = hasher.finish();
  return window;
}

}  // namespace

std::vector<ContextWindow> extract_variable_contexts(const TokenStream& stream,
                                                     std::string_view identifier,
                                                     std::uint32_t n) {
  if (n < 1) throw InputError("variable context radius must be >= 1");
  std::vector<ContextWindow> windows;
  auto it = stream.occurrences.find(std::string(identifier));
  if (it == stream.occurrences.end()) return windows;
  windows.reserve(it->second.size());
  std::uint32_t ordinal = 0;
  for (std::uint32_t index : it->second) {
    windows.push_back(make_variable_window(stream, index, ordinal++, n));
  }
  return windows;
}

std::vector<ContextWindow> extract_call_contexts(const TokenStream& stream,
                                                 std::string_view callee,
                                                 std::uint32_t n) {
  std::vector<ContextWindow> windows;
  auto it = stream.occurrences.find(std::string(callee));
  if (it == stream.occurrences.end()) return windows;
  const auto& tokens = stream.tokens;
  std::uint32_t ordinal = 0;
  for (std::uint32_t index : it->second) {
    auto span = call_argument_span(stream, index);
    if (!span) continue;  // occurrence is not a call site
    ContextWindow window;
    window.n = n;
    window.occurrence_index = ordinal++;
    window.center_index = index;
    window.center = tokens[index];
    window.truncated = span->truncated;
    for (std::int64_t i = static_cast<std::int64_t>(index) - n;
         i < static_cast<std::int64_t>(index); ++i) {
      window.left.push_back(i < 0 ? bos_token() : tokens[i]);
    }
    for (std::size_t i = span->begin; i < span->end; ++i) {
      window.right.push_back(tokens[i]);
    }
    for (std::size_t i = span->end; i < span->end + n; ++i) {
      window.right.push_back(i < tokens.size() ? tokens[i] : eos_token());
    }
    ContextHasher hasher;
    for (const Token& t : window.left) hasher.add(t.text);
    for (const Token& t : window.right) hasher.add(t.text);
    window.key = hasher.finish();
    windows.push_back(std::move(window));
  }
  return windows;
}

NGramKey stream_hash(const TokenStream& stream) {
  ContextHasher hasher;
  for (const Token& t : stream.tokens) hasher.add(t.text);
  return hasher.finish();
}

}  // namespace typrec
