#include "dtx/formats.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

namespace dtx {

namespace {

const char* kFormatNames[kNumFormats] = {"kg", "tripleset", "mr", "totto"};

const std::array<std::string, 12> kTottoTags = {
    "<page_title>", "</page_title>", "<section_title>", "</section_title>",
    "<table>",      "</table>",      "<cell>",          "</cell>",
    "<col_header>", "</col_header>", "<row_header>",    "</row_header>"};

bool is_totto_tag(const std::string& tok) {
  return std::find(kTottoTags.begin(), kTottoTags.end(), tok) != kTottoTags.end();
}

struct Tok {
  std::string text;
  std::size_t offset;  // char offset into the normalized string
};

std::vector<Tok> tokenize(const std::string& normalized) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    if (normalized[i] == ' ') {
      ++i;
      continue;
    }
    std::size_t j = normalized.find(' ', i);
    if (j == std::string::npos) j = normalized.size();
    out.push_back({normalized.substr(i, j - i), i});
    i = j;
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

// Reserved markers common to every format: bracket characters (they carry the
// KG and MR grammars) and any standalone grammar token.
bool field_ok_global(const std::string& field) {
  if (field.empty()) return false;
  if (field.find('[') != std::string::npos || field.find(']') != std::string::npos)
    return false;
  for (const auto& tok : tokenize(field)) {
    if (tok.text == "|" || is_totto_tag(tok.text)) return false;
  }
  return true;
}

FormatError err(std::size_t pos, std::string reason) {
  return FormatError{pos, std::move(reason)};
}

}  // namespace

int format_index(Format f) { return static_cast<int>(f); }

Format format_from_index(int idx) {
  if (idx < 0 || idx >= kNumFormats) throw std::out_of_range("format index out of range");
  return static_cast<Format>(idx);
}

const char* format_name(Format f) { return kFormatNames[format_index(f)]; }

Format format_from_name(const std::string& name) {
  for (int i = 0; i < kNumFormats; ++i) {
    if (name == kFormatNames[i]) return static_cast<Format>(i);
  }
  throw std::invalid_argument("unknown format name: " + name);
}

std::string normalize_ws(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = true;  // eat leading whitespace
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += c;
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

StructuredRecord canonical(const StructuredRecord& r) {
  StructuredRecord out;
  out.format = r.format;
  out.triples.reserve(r.triples.size());
  for (const auto& t : r.triples) {
    out.triples.push_back(
        {normalize_ws(t.subject), normalize_ws(t.relation), normalize_ws(t.object)});
  }
  if (out.format == Format::Totto) {
    TottoMeta m;
    if (r.meta) m = {normalize_ws(r.meta->page_title), normalize_ws(r.meta->section_title)};
    out.meta = m;
  }
  return out;
}

bool field_ok_for(const std::string& field, Format f) {
  const std::string n = normalize_ws(field);
  if (!field_ok_global(n)) return false;
  switch (f) {
    case Format::KG:
    case Format::Totto:
      return true;
    case Format::Tripleset:
      for (const auto& tok : tokenize(n)) {
        if (tok.text == ":") return false;
      }
      return true;
    case Format::MR:
      return true;
  }
  return true;
}

namespace {

// `name` is the MR group opener, so it cannot double as a relation there.
bool triple_ok_for(const Triple& t, Format f, std::string* why) {
  auto bad = [&](const std::string& field, const char* role) {
    if (why) *why = std::string(role) + " field not valid for format " + format_name(f) + ": '" + field + "'";
    return false;
  };
  if (!field_ok_for(t.subject, f)) return bad(t.subject, "subject");
  if (!field_ok_for(t.relation, f)) return bad(t.relation, "relation");
  if (!field_ok_for(t.object, f)) return bad(t.object, "object");
  if (f == Format::MR && normalize_ws(t.relation) == "name") {
    if (why) *why = "relation 'name' is reserved by the MR grammar";
    return false;
  }
  return true;
}

}  // namespace

bool record_valid(const StructuredRecord& r, std::string* why) {
  if (r.triples.empty()) {
    if (why) *why = "record has no triples";
    return false;
  }
  if ((r.format == Format::Totto) != r.meta.has_value()) {
    if (why) *why = "meta must be present iff format is totto";
    return false;
  }
  for (const auto& t : r.triples) {
    if (!triple_ok_for(t, r.format, why)) return false;
  }
  if (r.meta) {
    for (const std::string* m : {&r.meta->page_title, &r.meta->section_title}) {
      const std::string n = normalize_ws(*m);
      if (!n.empty() && !field_ok_global(n)) {
        if (why) *why = "totto meta field contains reserved tokens: '" + n + "'";
        return false;
      }
    }
  }
  return true;
}

std::string serialize(const StructuredRecord& raw) {
  const StructuredRecord r = canonical(raw);
  std::string why;
  if (!record_valid(r, &why)) throw InvalidRecord(why);

  switch (r.format) {
    case Format::KG: {
      std::vector<std::string> parts;
      for (const auto& t : r.triples) {
        parts.push_back("[HEAD] " + t.subject + " [TYPE] " + t.relation + " [TAIL] " + t.object);
      }
      return join_tokens(parts);
    }
    case Format::Tripleset: {
      std::string out;
      for (std::size_t i = 0; i < r.triples.size(); ++i) {
        if (i) out += " | ";
        const auto& t = r.triples[i];
        out += t.subject + " : " + t.relation + " : " + t.object;
      }
      return out;
    }
    case Format::MR: {
      std::string out;
      std::string current_subject;
      bool first = true;
      for (const auto& t : r.triples) {
        if (first || t.subject != current_subject) {
          if (!first) out += ", ";
          out += "name[" + t.subject + "]";
          current_subject = t.subject;
          first = false;
        }
        out += ", " + t.relation + "[" + t.object + "]";
      }
      return out;
    }
    case Format::Totto: {
      const std::string& page = r.meta->page_title;
      const std::string& section = r.meta->section_title;
      const std::string fallback = page.empty() ? std::string("Entities") : page;
      std::vector<std::string> toks;
      toks.push_back("<page_title>");
      if (!page.empty()) toks.push_back(page);
      toks.push_back("</page_title>");
      toks.push_back("<section_title>");
      if (!section.empty()) toks.push_back(section);
      toks.push_back("</section_title>");
      toks.push_back("<table>");
      for (const auto& t : r.triples) {
        toks.push_back("<cell>");
        toks.push_back(t.object);
        toks.push_back("<col_header>");
        toks.push_back(t.relation);
        toks.push_back("</col_header>");
        if (t.subject != fallback) {
          toks.push_back("<row_header>");
          toks.push_back(t.subject);
          toks.push_back("</row_header>");
        }
        toks.push_back("</cell>");
      }
      toks.push_back("</table>");
      return join_tokens(toks);
    }
  }
  throw InvalidRecord("unreachable");
}

bool parse_ok(const ParseResult& r) { return std::holds_alternative<StructuredRecord>(r); }
const StructuredRecord& parse_record(const ParseResult& r) { return std::get<StructuredRecord>(r); }
const FormatError& parse_error(const ParseResult& r) { return std::get<FormatError>(r); }

namespace {

ParseResult parse_kg(const std::vector<Tok>& toks) {
  StructuredRecord rec;
  rec.format = Format::KG;
  std::size_t i = 0;
  if (toks.empty() || toks[0].text != "[HEAD]") {
    return err(toks.empty() ? 0 : toks[0].offset, "KG record must start with [HEAD]");
  }
  auto is_marker = [](const std::string& t) {
    return t == "[HEAD]" || t == "[TYPE]" || t == "[TAIL]";
  };
  while (i < toks.size()) {
    if (toks[i].text != "[HEAD]") return err(toks[i].offset, "expected [HEAD]");
    ++i;
    std::vector<std::string> subject;
    while (i < toks.size() && toks[i].text != "[TYPE]") {
      if (is_marker(toks[i].text)) return err(toks[i].offset, "missing [TYPE] between [HEAD] and [TAIL]");
      subject.push_back(toks[i].text);
      ++i;
    }
    if (i >= toks.size()) return err(toks.back().offset, "missing [TYPE] between [HEAD] and [TAIL]");
    if (subject.empty()) return err(toks[i].offset, "empty subject");
    ++i;  // [TYPE]
    std::vector<std::string> relation;
    while (i < toks.size() && toks[i].text != "[TAIL]") {
      if (is_marker(toks[i].text)) return err(toks[i].offset, "missing [TAIL] after [TYPE]");
      relation.push_back(toks[i].text);
      ++i;
    }
    if (i >= toks.size()) return err(toks.back().offset, "missing [TAIL] after [TYPE]");
    if (relation.empty()) return err(toks[i].offset, "empty relation");
    ++i;  // [TAIL]
    std::vector<std::string> object;
    while (i < toks.size() && toks[i].text != "[HEAD]") {
      if (is_marker(toks[i].text)) return err(toks[i].offset, "unexpected marker inside object");
      object.push_back(toks[i].text);
      ++i;
    }
    if (object.empty()) return err(i < toks.size() ? toks[i].offset : toks.back().offset, "empty object");
    rec.triples.push_back({join_tokens(subject), join_tokens(relation), join_tokens(object)});
  }
  return rec;
}

ParseResult parse_tripleset(const std::vector<Tok>& toks) {
  StructuredRecord rec;
  rec.format = Format::Tripleset;
  std::size_t i = 0;
  while (i < toks.size()) {
    std::array<std::vector<std::string>, 3> fields;
    int field = 0;
    std::size_t item_start = toks[i].offset;
    while (i < toks.size() && toks[i].text != "|") {
      if (toks[i].text == ":") {
        ++field;
        if (field > 2) return err(toks[i].offset, "too many ':' separators in triple");
      } else {
        fields[field].push_back(toks[i].text);
      }
      ++i;
    }
    if (field != 2) return err(item_start, "triple needs exactly two ':' separators");
    for (const auto& f : fields) {
      if (f.empty()) return err(item_start, "empty field in triple");
    }
    rec.triples.push_back(
        {join_tokens(fields[0]), join_tokens(fields[1]), join_tokens(fields[2])});
    if (i < toks.size()) {
      ++i;  // '|'
      if (i >= toks.size()) return err(toks.back().offset, "dangling '|' separator");
    }
  }
  if (rec.triples.empty()) return err(0, "no triples");
  return rec;
}

// Items are NAME[CONTENT] joined by ", "; NAME runs to the next '[', CONTENT
// to the matching ']'. `name[...]` opens a subject group that must collect at
// least one attribute.
ParseResult parse_mr(const std::string& s) {
  StructuredRecord rec;
  rec.format = Format::MR;
  std::size_t pos = 0;
  std::string subject;
  int attrs_in_group = -1;  // -1: no group open yet
  while (pos < s.size()) {
    std::size_t open = s.find('[', pos);
    if (open == std::string::npos) return err(pos, "expected '[' after attribute name");
    std::string name = normalize_ws(s.substr(pos, open - pos));
    std::size_t close = s.find(']', open + 1);
    if (close == std::string::npos) return err(open, "unbalanced '[' bracket");
    std::string content = s.substr(open + 1, close - open - 1);
    if (content.find('[') != std::string::npos) return err(open + 1, "nested '[' bracket");
    content = normalize_ws(content);
    if (content.empty()) return err(open + 1, "empty bracket content");
    if (name == "name") {
      if (attrs_in_group == 0) return err(pos, "subject group with no attributes");
      subject = content;
      attrs_in_group = 0;
    } else {
      if (name.empty()) return err(pos, "empty attribute name");
      if (attrs_in_group < 0) return err(pos, "MR record must start with name[...]");
      rec.triples.push_back({subject, name, content});
      ++attrs_in_group;
    }
    pos = close + 1;
    if (pos == s.size()) break;
    if (s.compare(pos, 2, ", ") != 0) return err(pos, "expected ', ' between items");
    pos += 2;
    if (pos >= s.size()) return err(pos, "dangling ', ' separator");
  }
  if (attrs_in_group == 0) return err(s.size(), "subject group with no attributes");
  if (rec.triples.empty()) return err(0, "no triples");
  return rec;
}

ParseResult parse_totto(const std::vector<Tok>& toks) {
  std::size_t i = 0;
  auto expect = [&](const char* tag) -> std::optional<FormatError> {
    if (i >= toks.size()) return err(toks.empty() ? 0 : toks.back().offset,
                                     std::string("expected ") + tag);
    if (toks[i].text != tag) return err(toks[i].offset, std::string("expected ") + tag);
    ++i;
    return std::nullopt;
  };
  auto collect_until = [&](const char* closing, std::vector<std::string>* out)
      -> std::optional<FormatError> {
    while (i < toks.size() && toks[i].text != closing) {
      if (is_totto_tag(toks[i].text)) {
        return err(toks[i].offset, std::string("unexpected tag before ") + closing);
      }
      out->push_back(toks[i].text);
      ++i;
    }
    if (i >= toks.size()) return err(toks.empty() ? 0 : toks.back().offset,
                                     std::string("missing ") + closing);
    ++i;  // closing tag
    return std::nullopt;
  };

  StructuredRecord rec;
  rec.format = Format::Totto;
  std::vector<std::string> page, section;
  if (auto e = expect("<page_title>")) return *e;
  if (auto e = collect_until("</page_title>", &page)) return *e;
  if (auto e = expect("<section_title>")) return *e;
  if (auto e = collect_until("</section_title>", &section)) return *e;
  if (auto e = expect("<table>")) return *e;
  const std::string page_title = join_tokens(page);
  const std::string fallback = page_title.empty() ? std::string("Entities") : page_title;
  rec.meta = TottoMeta{page_title, join_tokens(section)};

  while (i < toks.size() && toks[i].text == "<cell>") {
    ++i;
    std::vector<std::string> object, relation, subject;
    while (i < toks.size() && toks[i].text != "<col_header>") {
      if (is_totto_tag(toks[i].text)) return err(toks[i].offset, "expected <col_header> in cell");
      object.push_back(toks[i].text);
      ++i;
    }
    if (i >= toks.size()) return err(toks.back().offset, "cell missing <col_header>");
    if (object.empty()) return err(toks[i].offset, "empty cell value");
    ++i;
    if (auto e = collect_until("</col_header>", &relation)) return *e;
    if (relation.empty()) return err(toks[i - 1].offset, "empty column header");
    std::string subj;
    if (i < toks.size() && toks[i].text == "<row_header>") {
      ++i;
      if (auto e = collect_until("</row_header>", &subject)) return *e;
      if (subject.empty()) return err(toks[i - 1].offset, "empty row header");
      subj = join_tokens(subject);
    } else {
      subj = fallback;
    }
    if (auto e = expect("</cell>")) return *e;
    rec.triples.push_back({subj, join_tokens(relation), join_tokens(object)});
  }
  if (auto e = expect("</table>")) return *e;
  if (i != toks.size()) return err(toks[i].offset, "trailing content after </table>");
  if (rec.triples.empty()) return err(0, "table has no cells");
  return rec;
}

}  // namespace

ParseResult parse(const std::string& text, Format format) {
  const std::string s = normalize_ws(text);
  if (s.empty()) return err(0, "empty input");
  const std::vector<Tok> toks = tokenize(s);
  ParseResult res = err(0, "unknown format");
  switch (format) {
    case Format::KG:
      res = parse_kg(toks);
      break;
    case Format::Tripleset:
      res = parse_tripleset(toks);
      break;
    case Format::MR:
      res = parse_mr(s);
      break;
    case Format::Totto:
      res = parse_totto(toks);
      break;
  }
  // A successful parse must satisfy the record invariants, so fields that
  // smuggle reserved tokens of their own format are parse failures too.
  if (parse_ok(res)) {
    std::string why;
    if (!record_valid(parse_record(res), &why)) return err(0, why);
  }
  return res;
}

StructuredRecord convert(const StructuredRecord& r, Format target) {
  StructuredRecord out = canonical(r);
  out.format = target;
  if (target == Format::Totto) {
    if (r.format != Format::Totto || !out.meta) out.meta = TottoMeta{"", ""};
  } else {
    out.meta.reset();
  }
  std::string why;
  if (!record_valid(out, &why)) throw InvalidRecord(why);
  return out;
}

ContentGraph to_graph(const StructuredRecord& raw) {
  const StructuredRecord r = canonical(raw);
  ContentGraph g;
  std::unordered_set<std::string> seen_nodes;
  auto add_node = [&](const std::string& label) {
    if (seen_nodes.insert(label).second) g.nodes.push_back(label);
  };
  std::unordered_set<std::string> seen_edges;
  for (const auto& t : r.triples) {
    add_node(t.subject);
    add_node(t.object);
    const std::string key = t.subject + "\x1f" + t.relation + "\x1f" + t.object;
    if (seen_edges.insert(key).second) g.edges.push_back({t.subject, t.relation, t.object});
  }
  return g;
}

std::string rule_text(const StructuredRecord& raw) {
  const StructuredRecord r = canonical(raw);
  std::vector<std::string> pieces;
  if (r.format == Format::Totto) {
    if (r.meta) {
      if (!r.meta->page_title.empty()) pieces.push_back(r.meta->page_title);
      if (!r.meta->section_title.empty()) pieces.push_back(r.meta->section_title);
    }
    for (const auto& t : r.triples) pieces.push_back(t.object + " " + t.relation);
  } else {
    for (const auto& t : r.triples) {
      pieces.push_back(t.subject + " " + t.relation + " " + t.object);
    }
  }
  std::string out;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i) out += " and ";
    out += pieces[i];
  }
  return out;
}

}  // namespace dtx
