// formats.hpp -- canonical triples and the four structured-data linearizations
// (knowledge graph, triple set, meaning representation, table).

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dtx {

enum class Format : int { KG = 0, Tripleset = 1, MR = 2, Totto = 3 };

constexpr int kNumFormats = 4;

int format_index(Format f);
Format format_from_index(int idx);          // throws std::out_of_range
const char* format_name(Format f);          // "kg" | "tripleset" | "mr" | "totto"
Format format_from_name(const std::string& name);  // throws std::invalid_argument

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;

  bool operator==(const Triple&) const = default;
};

struct TottoMeta {
  std::string page_title;
  std::string section_title;

  bool operator==(const TottoMeta&) const = default;
};

struct StructuredRecord {
  Format format{Format::KG};
  std::vector<Triple> triples;
  std::optional<TottoMeta> meta;  // present iff format == Totto

  bool operator==(const StructuredRecord&) const = default;
};

// Parse failure; position is a character offset into the normalized input.
struct FormatError {
  std::size_t position{0};
  std::string reason;
};

class InvalidRecord : public std::runtime_error {
 public:
  explicit InvalidRecord(const std::string& what) : std::runtime_error(what) {}
};

// Trim outer whitespace and collapse interior runs to single spaces.
std::string normalize_ws(const std::string& s);

// Normalized copy: fields trimmed/collapsed, meta made consistent with the
// format (synthesized empty for Totto, dropped otherwise). Idempotent.
StructuredRecord canonical(const StructuredRecord& r);

// Record-level validity: non-empty triple list, non-empty normalized fields,
// no reserved tokens of the record's own format inside fields.
bool record_valid(const StructuredRecord& r, std::string* why = nullptr);

// True when `field` may appear as a triple field in format `f`.
bool field_ok_for(const std::string& field, Format f);

// Single-line linearization of a valid record. Throws InvalidRecord when a
// field collides with a reserved token of the record's format.
std::string serialize(const StructuredRecord& r);

using ParseResult = std::variant<StructuredRecord, FormatError>;

// Strict grammar match after whitespace normalization. Never throws;
// malformed input yields FormatError.
ParseResult parse(const std::string& text, Format format);

bool parse_ok(const ParseResult& r);
const StructuredRecord& parse_record(const ParseResult& r);
const FormatError& parse_error(const ParseResult& r);

// Re-serialize the same triples in another format. Meta is synthesized
// (empty) going into Totto and dropped going out. Throws InvalidRecord on
// reserved-token collisions with the target format.
StructuredRecord convert(const StructuredRecord& r, Format target);

struct GraphEdge {
  std::string src;
  std::string relation;
  std::string dst;

  bool operator==(const GraphEdge&) const = default;
};

struct ContentGraph {
  std::vector<std::string> nodes;  // unique normalized labels, insertion order
  std::vector<GraphEdge> edges;    // duplicate triples collapsed

  bool operator==(const ContentGraph&) const = default;
};

ContentGraph to_graph(const StructuredRecord& r);

// The pseudo-text of the rule noise function: `s r o` per triple joined by
// ` and `; for Totto the meta titles come first and cells contribute `o r`.
std::string rule_text(const StructuredRecord& r);

}  // namespace dtx
