#include "typrec/common.hpp"

namespace typrec {

bool is_struct_kind(TypeKind k) {
  return k == TypeKind::Struct || k == TypeKind::PointerToStruct;
}

std::string_view to_string(Bitness b) {
  return b == Bitness::Bits32 ? "32" : "64";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

std::string_view to_string(Vocabulary v) {
  return v == Vocabulary::Types ? "types" : "signatures";
}

std::string_view to_string(TypeKind k) {
  switch (k) {
    case TypeKind::Primitive: return "primitive";
    case TypeKind::Pointer: return "pointer";
    case TypeKind::Struct: return "struct";
    case TypeKind::PointerToStruct: return "pointer_to_struct";
    case TypeKind::Union: return "union";
    case TypeKind::Array: return "array";
    case TypeKind::FunctionPointer: return "function_pointer";
    case TypeKind::Other: return "other";
  }
  return "other";
}

std::optional<Bitness> parse_bitness(std::uint64_t value) {
  if (value == 32) return Bitness::Bits32;
  if (value == 64) return Bitness::Bits64;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "validation") return Split::Validation;
  if (text == "test") return Split::Test;
  return std::nullopt;
}

std::optional<TypeKind> parse_type_kind(std::string_view text) {
  if (text == "primitive") return TypeKind::Primitive;
  if (text == "pointer") return TypeKind::Pointer;
  if (text == "struct") return TypeKind::Struct;
  if (text == "pointer_to_struct") return TypeKind::PointerToStruct;
  if (text == "union") return TypeKind::Union;
  if (text == "array") return TypeKind::Array;
  if (text == "function_pointer") return TypeKind::FunctionPointer;
  if (text == "other") return TypeKind::Other;
  return std::nullopt;
}

std::optional<Vocabulary> parse_vocabulary(std::string_view text) {
  if (text == "types") return Vocabulary::Types;
  if (text == "signatures") return Vocabulary::Signatures;
  return std::nullopt;
}

}  // namespace typrec
