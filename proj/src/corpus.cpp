#include "typrec/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "typrec/lexer.hpp"

namespace typrec {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line,
                       const std::string& message) {
  std::ostringstream out;
  out << path.string() << ":" << line << ": " << message;
  throw InputError(out.str());
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& message) {
  throw InputError(path.string() + ": " + message);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

TypeLayout parse_layout(const json& entry, const std::filesystem::path& path,
                        const std::string& name) {
  TypeLayout layout;
  layout.total_width = entry.at("total_width").get<std::uint32_t>();
  bool first = true;
  std::uint32_t prev_offset = 0;
  for (const json& field : entry.at("fields")) {
    TypeLayoutField f;
    f.name = field.at("name").get<std::string>();
    f.offset = field.at("offset").get<std::uint32_t>();
    f.width = field.at("width").get<std::uint32_t>();
    f.type_name = field.value("type", std::string());
    if (!first && f.offset == prev_offset) {
      fail(path, "type '" + name + "': duplicate field offset " +
                     std::to_string(f.offset));
    }
    if (!first && f.offset < prev_offset) {
      fail(path, "type '" + name + "': field offsets must be strictly increasing");
    }
    if (static_cast<std::uint64_t>(f.offset) + f.width > layout.total_width) {
      fail(path, "type '" + name + "': field '" + f.name +
                     "' exceeds total_width");
    }
    prev_offset = f.offset;
    first = false;
    layout.fields.push_back(std::move(f));
  }
  return layout;
}

TypeLabel parse_type_entry(const json& entry, const std::filesystem::path& path,
                           const std::string& name) {
  TypeLabel label;
  label.name = name;
  auto kind = parse_type_kind(entry.at("kind").get<std::string>());
  if (!kind) fail(path, "type '" + name + "': unknown kind");
  label.kind = *kind;
  if (entry.contains("bitness")) {
    auto bitness = parse_bitness(entry.at("bitness").get<std::uint64_t>());
    if (!bitness) fail(path, "type '" + name + "': bitness must be 32 or 64");
    label.bitness = bitness;
  }
  if (entry.contains("fields")) {
    label.layout = parse_layout(entry, path, name);
  }
  if (is_struct_kind(label.kind) || label.kind == TypeKind::Union) {
    if (!label.layout) {
      fail(path, "type '" + name + "': struct-kind entries require a layout");
    }
  }
  return label;
}

json layout_to_json(const TypeLayout& layout) {
  json fields = json::array();
  for (const auto& f : layout.fields) {
    fields.push_back({{"name", f.name},
                      {"offset", f.offset},
                      {"width", f.width},
                      {"type", f.type_name}});
  }
  return fields;
}

json type_entry_to_json(const TypeLabel& label) {
  json entry;
  entry["kind"] = std::string(to_string(label.kind));
  if (label.bitness) {
    entry["bitness"] = static_cast<std::uint32_t>(*label.bitness);
  }
  if (label.layout) {
    entry["total_width"] = label.layout->total_width;
    entry["fields"] = layout_to_json(*label.layout);
  }
  return entry;
}

}  // namespace

void TypeLibrary::insert(TypeLabel label) {
  auto& variants = entries_[label.name];
  for (const TypeLabel& existing : variants) {
    bool conflict = !existing.bitness || !label.bitness ||
                    *existing.bitness == *label.bitness;
    if (conflict) {
      throw InputError("duplicate type name '" + label.name +
                       "' for the same bitness");
    }
  }
  variants.push_back(std::move(label));
}

const TypeLabel* TypeLibrary::find(std::string_view name, Bitness bitness) const {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end()) return nullptr;
  const TypeLabel* fallback = nullptr;
  for (const TypeLabel& label : it->second) {
    if (label.bitness && *label.bitness == bitness) return &label;
    if (!label.bitness) fallback = &label;
  }
  return fallback;
}

bool TypeLibrary::contains_name(std::string_view name) const {
  return entries_.contains(std::string(name));
}

std::size_t TypeLibrary::size() const {
  std::size_t total = 0;
  for (const auto& [_, variants] : entries_) total += variants.size();
  return total;
}

void SignatureLibrary::insert(SignatureLabel label) {
  auto [it, inserted] = entries_.emplace(label.name, label);
  if (!inserted) {
    throw InputError("duplicate signature name '" + label.name + "'");
  }
}

const SignatureLabel* SignatureLibrary::find(std::string_view name) const {
  auto it = entries_.find(std::string(name));
  return it == entries_.end() ? nullptr : &it->second;
}

bool SignatureLibrary::contains_name(std::string_view name) const {
  return entries_.contains(std::string(name));
}

std::size_t SignatureLibrary::size() const { return entries_.size(); }

const AnnotatedFunction* Corpus::find_function(std::string_view binary_id,
                                               std::uint64_t address) const {
  for (const AnnotatedFunction& fn : functions) {
    if (fn.address == address && fn.binary_id == binary_id) return &fn;
  }
  return nullptr;
}

TypeLibrary load_type_library(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(path, std::string("parse error: ") + e.what());
  }
  if (!doc.is_object()) fail(path, "type library must be a JSON object");
  TypeLibrary library;
  try {
    for (const auto& [name, value] : doc.items()) {
      if (value.is_array()) {
        for (const json& entry : value) {
          library.insert(parse_type_entry(entry, path, name));
        }
      } else {
        library.insert(parse_type_entry(value, path, name));
      }
    }
  } catch (const json::exception& e) {
    fail(path, std::string("malformed entry: ") + e.what());
  }
  return library;
}

SignatureLibrary load_signature_library(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(path, std::string("parse error: ") + e.what());
  }
  if (!doc.is_object()) fail(path, "signature library must be a JSON object");
  SignatureLibrary library;
  try {
    for (const auto& [name, value] : doc.items()) {
      SignatureLabel label;
      label.name = name;
      label.function_name = value.value("function_name", name);
      if (value.contains("params")) {
        for (const json& param : value.at("params")) {
          label.parameters.push_back({param.at("name").get<std::string>(),
                                      param.at("type").get<std::string>()});
        }
      }
      label.return_type_name = value.value("return", std::string("void"));
      library.insert(std::move(label));
    }
  } catch (const json::exception& e) {
    fail(path, std::string("malformed entry: ") + e.what());
  }
  return library;
}

std::string address_to_hex(std::uint64_t address) {
  char buf[20];
  auto* end = buf + sizeof(buf);
  auto result = std::to_chars(buf + 2, end, address, 16);
  buf[0] = '0';
  buf[1] = 'x';
  return std::string(buf, result.ptr);
}

std::optional<std::uint64_t> parse_hex_address(std::string_view text) {
  if (text.starts_with("0x") || text.starts_with("0X")) text.remove_prefix(2);
  if (text.empty()) return std::nullopt;
  std::uint64_t value = 0;
  auto result = std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return value;
}

namespace {

AnnotatedFunction parse_function_line(const json& record,
                                      const std::filesystem::path& path,
                                      std::size_t line) {
  AnnotatedFunction fn;
  fn.binary_id = record.at("binary_id").get<std::string>();
  auto address = parse_hex_address(record.at("address").get<std::string>());
  if (!address) fail(path, line, "invalid hex address");
  fn.address = *address;
  auto bitness = parse_bitness(record.at("bitness").get<std::uint64_t>());
  if (!bitness) fail(path, line, "bitness must be 32 or 64");
  fn.bitness = *bitness;
  fn.source_text = record.at("code").get<std::string>();
  if (record.contains("vars")) {
    for (const auto& [name, type] : record.at("vars").items()) {
      fn.variable_annotations[name] = type.get<std::string>();
    }
  }
  if (record.contains("calls")) {
    for (const auto& [name, sig] : record.at("calls").items()) {
      fn.call_annotations[name] = sig.get<std::string>();
    }
  }
  auto split = parse_split(record.at("split").get<std::string>());
  if (!split) fail(path, line, "split must be train, validation, or test");
  fn.split = *split;
  if (record.contains("opt") && !record.at("opt").is_null()) {
    fn.opt_level = record.at("opt").get<std::string>();
  }
  return fn;
}

void validate_function(const AnnotatedFunction& fn, const TypeLibrary& types,
                       const SignatureLibrary& signatures,
                       const std::string& context) {
  TokenStream stream = tokenize(fn.source_text);
  for (const auto& [identifier, type_name] : fn.variable_annotations) {
    if (!stream.occurrences.contains(identifier)) {
      throw InputError(context + ": annotated identifier '" + identifier +
                       "' does not occur in the code");
    }
    if (types.find(type_name, fn.bitness) == nullptr) {
      throw InputError(context + ": unresolved type annotation '" + type_name +
                       "' for identifier '" + identifier + "'");
    }
  }
  for (const auto& [callee, signature_name] : fn.call_annotations) {
    if (!stream.occurrences.contains(callee)) {
      throw InputError(context + ": annotated callee '" + callee +
                       "' does not occur in the code");
    }
    if (signatures.find(signature_name) == nullptr) {
      throw InputError(context + ": unresolved signature annotation '" +
                       signature_name + "' for callee '" + callee + "'");
    }
  }
}

void check_vocabulary_disjoint(const TypeLibrary& types,
                               const SignatureLibrary& signatures) {
  for (const auto& [name, _] : signatures.entries()) {
    if (types.contains_name(name)) {
      throw InputError("label '" + name +
                       "' appears in both the type and signature vocabularies");
    }
  }
}

}  // namespace

void validate_corpus(const Corpus& corpus) {
  check_vocabulary_disjoint(corpus.type_library, corpus.signature_library);
  std::set<std::pair<std::string, std::uint64_t>> seen;
  for (const AnnotatedFunction& fn : corpus.functions) {
    std::string context = fn.binary_id + "@" + address_to_hex(fn.address);
    if (!seen.emplace(fn.binary_id, fn.address).second) {
      throw InputError("duplicate function " + context);
    }
    validate_function(fn, corpus.type_library, corpus.signature_library, context);
  }
}

Corpus load_corpus(const std::filesystem::path& corpus_path, TypeLibrary types,
                   SignatureLibrary signatures) {
  Corpus corpus;
  corpus.type_library = std::move(types);
  corpus.signature_library = std::move(signatures);
  check_vocabulary_disjoint(corpus.type_library, corpus.signature_library);

  std::ifstream in = open_input(corpus_path);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::pair<std::string, std::uint64_t>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      fail(corpus_path, line_no, std::string("parse error: ") + e.what());
    }
    AnnotatedFunction fn;
    try {
      fn = parse_function_line(record, corpus_path, line_no);
    } catch (const json::exception& e) {
      fail(corpus_path, line_no, std::string("malformed record: ") + e.what());
    }
    if (!seen.emplace(fn.binary_id, fn.address).second) {
      fail(corpus_path, line_no,
           "duplicate function " + fn.binary_id + "@" + address_to_hex(fn.address));
    }
    try {
      validate_function(fn, corpus.type_library, corpus.signature_library,
                        fn.binary_id + "@" + address_to_hex(fn.address));
    } catch (const InputError& e) {
      fail(corpus_path, line_no, e.what());
    }
    corpus.functions.push_back(std::move(fn));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& corpus_path,
                   const std::filesystem::path& type_library_path,
                   const std::optional<std::filesystem::path>& signature_library_path) {
  TypeLibrary types = load_type_library(type_library_path);
  SignatureLibrary signatures;
  if (signature_library_path) {
    signatures = load_signature_library(*signature_library_path);
  }
  return load_corpus(corpus_path, std::move(types), std::move(signatures));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& corpus_path,
                 const std::filesystem::path& type_library_path,
                 const std::filesystem::path& signature_library_path) {
  {
    std::ofstream out(corpus_path);
    if (!out) throw InputError("cannot write " + corpus_path.string());
    for (const AnnotatedFunction& fn : corpus.functions) {
      json record;
      record["binary_id"] = fn.binary_id;
      record["address"] = address_to_hex(fn.address);
      record["bitness"] = static_cast<std::uint32_t>(fn.bitness);
      record["code"] = fn.source_text;
      record["vars"] = json::object();
      for (const auto& [name, type] : fn.variable_annotations) {
        record["vars"][name] = type;
      }
      record["calls"] = json::object();
      for (const auto& [name, sig] : fn.call_annotations) {
        record["calls"][name] = sig;
      }
      record["split"] = std::string(to_string(fn.split));
      if (fn.opt_level) record["opt"] = *fn.opt_level;
      out << record.dump() << "\n";
    }
  }
  {
    std::ofstream out(type_library_path);
    if (!out) throw InputError("cannot write " + type_library_path.string());
    json doc;
    for (const auto& [name, variants] : corpus.type_library.entries()) {
      if (variants.size() == 1) {
        doc[name] = type_entry_to_json(variants.front());
      } else {
        json list = json::array();
        for (const TypeLabel& label : variants) {
          list.push_back(type_entry_to_json(label));
        }
        doc[name] = list;
      }
    }
    out << doc.dump(2) << "\n";
  }
  {
    std::ofstream out(signature_library_path);
    if (!out) throw InputError("cannot write " + signature_library_path.string());
    json doc;
    for (const auto& [name, label] : corpus.signature_library.entries()) {
      json entry;
      if (label.function_name != name) entry["function_name"] = label.function_name;
      json params = json::array();
      for (const SignatureParam& p : label.parameters) {
        params.push_back({{"name", p.name}, {"type", p.type_name}});
      }
      entry["params"] = params;
      entry["return"] = label.return_type_name;
      doc[name] = entry;
    }
    out << doc.dump(2) << "\n";
  }
}

const SplitOverlap* SplitReport::pair(Split a, Split b) const {
  for (const SplitOverlap& o : overlaps) {
    if ((o.a == a && o.b == b) || (o.a == b && o.b == a)) return &o;
  }
  return nullptr;
}

SplitReport validate_splits(const Corpus& corpus) {
  SplitReport report;
  std::array<std::vector<NGramKey>, 3> hashes;
  for (const AnnotatedFunction& fn : corpus.functions) {
    NGramKey h = stream_hash(tokenize(fn.source_text));
    hashes[static_cast<std::size_t>(fn.split)].push_back(h);
  }
  report.train_count = hashes[0].size();
  report.validation_count = hashes[1].size();
  report.test_count = hashes[2].size();

  auto overlap_for = [&hashes](Split a, Split b) {
    const auto& va = hashes[static_cast<std::size_t>(a)];
    const auto& vb = hashes[static_cast<std::size_t>(b)];
    std::unordered_set<NGramKey> set_a(va.begin(), va.end());
    std::unordered_set<NGramKey> set_b(vb.begin(), vb.end());
    SplitOverlap o;
    o.a = a;
    o.b = b;
    o.functions_a = va.size();
    o.functions_b = vb.size();
    for (NGramKey h : va) o.matches_a += set_b.contains(h) ? 1 : 0;
    for (NGramKey h : vb) o.matches_b += set_a.contains(h) ? 1 : 0;
    std::size_t total = o.functions_a + o.functions_b;
    o.overlap = total == 0
                    ? 0.0
                    : static_cast<double>(o.matches_a + o.matches_b) /
                          static_cast<double>(total);
    o.fraction_of_b_in_a = o.functions_b == 0
                               ? 0.0
                               : static_cast<double>(o.matches_b) /
                                     static_cast<double>(o.functions_b);
    return o;
  };

  report.overlaps.push_back(overlap_for(Split::Train, Split::Validation));
  report.overlaps.push_back(overlap_for(Split::Train, Split::Test));
  report.overlaps.push_back(overlap_for(Split::Validation, Split::Test));
  return report;
}

std::string render_text(const SplitReport& report) {
  std::ostringstream out;
  out << "split counts: train=" << report.train_count
      << " validation=" << report.validation_count
      << " test=" << report.test_count << "\n";
  for (const SplitOverlap& o : report.overlaps) {
    out << "overlap " << to_string(o.a) << "/" << to_string(o.b) << ": "
        << o.overlap * 100.0 << "% (" << o.matches_a << "/" << o.functions_a
        << " and " << o.matches_b << "/" << o.functions_b << " matched)\n";
  }
  return out.str();
}

}  // namespace typrec
