#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace typrec {

// Word size of the binary a function was lifted from.
enum class Bitness : std::uint32_t { Bits32 = 32, Bits64 = 64 };

enum class Split : std::uint8_t { Train, Validation, Test };

// Label namespace a database indexes: variable types or function signatures.
// The two vocabularies never mix inside one database or ensemble.
enum class Vocabulary : std::uint8_t { Types = 0, Signatures = 1 };

enum class TypeKind : std::uint8_t {
  Primitive,
  Pointer,
  Struct,
  PointerToStruct,
  Union,
  Array,
  FunctionPointer,
  Other,
};

// Confidence threshold; disengaged means "no threshold".
using Threshold = std::optional<double>;

// Malformed or inconsistent user input: unparsable files, unresolved names,
// mismatched parameters. The CLI maps these to a distinct exit code.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated internal expectation; indicates a bug rather than bad input.
struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

// Structs and pointers to structs; arrays and unions are excluded.
bool is_struct_kind(TypeKind k);

std::string_view to_string(Bitness b);
std::string_view to_string(Split s);
std::string_view to_string(Vocabulary v);
std::string_view to_string(TypeKind k);

std::optional<Bitness> parse_bitness(std::uint64_t value);
std::optional<Split> parse_split(std::string_view text);
std::optional<TypeKind> parse_type_kind(std::string_view text);
std::optional<Vocabulary> parse_vocabulary(std::string_view text);

}  // namespace typrec
