#include "dtx/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "dtx/rand.hpp"

namespace dtx {

namespace {

const std::array<std::string, Vocab::kReserved> kReservedTokens = {
    "<pad>", "<s>", "</s>", "<unk>", "[STYLE]", "BLANK", "Generate", "text:", "data:",
    "[HEAD]", "[TYPE]", "[TAIL]", ":", "|",
    "<page_title>", "</page_title>", "<section_title>", "</section_title>",
    "<table>", "</table>", "<cell>", "</cell>",
    "<col_header>", "</col_header>", "<row_header>", "</row_header>"};

}  // namespace

Vocab::Vocab() {
  tokens_.reserve(kReserved);
  for (int i = 0; i < kReserved; ++i) add(kReservedTokens[i]);
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

bool Vocab::contains(const std::string& token) const { return index_.count(token) > 0; }

void Vocab::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<Source>& sources, int min_count) {
  if (sources.empty()) throw EmptyCorpus("no sources");
  std::size_t total_items = 0;
  std::map<std::string, int> counts;  // ordered map keeps ids reproducible
  for (const auto& src : sources) {
    total_items += src.texts.size() + src.records.size();
    for (const auto& t : src.texts) {
      for (const auto& tok : whitespace_tokens(t)) counts[tok]++;
    }
    for (const auto& r : src.records) {
      for (const auto& tok : whitespace_tokens(serialize(r))) counts[tok]++;
    }
  }
  if (total_items == 0) throw EmptyCorpus("sources contain no texts or records");

  Vocab v;
  // Most frequent first; ties broken lexicographically.
  std::vector<std::pair<std::string, int>> by_count(counts.begin(), counts.end());
  std::stable_sort(by_count.begin(), by_count.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : by_count) {
    if (n >= min_count) v.add(tok);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocab: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocab: " + path);
  Vocab v;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    if (idx < kReserved) {
      if (line != kReservedTokens[idx]) {
        throw std::runtime_error("vocab file reserved block mismatch at id " +
                                 std::to_string(idx));
      }
    } else {
      v.add(line);
    }
    ++idx;
  }
  return v;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

TokenSeq encode(const std::string& text, const Vocab& vocab, TaskPrefix prefix,
                bool style_slot) {
  TokenSeq seq;
  seq.ids.push_back(Vocab::kBos);
  seq.ids.push_back(Vocab::kGenerate);
  seq.ids.push_back(prefix == TaskPrefix::Text ? Vocab::kTextPrefix : Vocab::kDataPrefix);
  if (style_slot) seq.ids.push_back(Vocab::kStyle);
  for (const auto& tok : whitespace_tokens(text)) seq.ids.push_back(vocab.id(tok));
  seq.ids.push_back(Vocab::kEos);
  return seq;
}

std::string decode(const TokenSeq& seq, const Vocab& vocab) {
  // Framing and prefix tokens are dropped; grammar markers, BLANK and <unk>
  // are genuine surface tokens and stay.
  std::string out;
  for (int id : seq.ids) {
    switch (id) {
      case Vocab::kPad:
      case Vocab::kBos:
      case Vocab::kEos:
      case Vocab::kStyle:
      case Vocab::kGenerate:
      case Vocab::kTextPrefix:
      case Vocab::kDataPrefix:
        continue;
      default:
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
  }
  return out;
}

std::vector<int> payload_ids(const std::string& text, const Vocab& vocab) {
  std::vector<int> out;
  for (const auto& tok : whitespace_tokens(text)) out.push_back(vocab.id(tok));
  return out;
}

std::vector<double> source_mixture(const std::vector<Source>& sources, double temperature) {
  std::vector<double> w(sources.size());
  double total = 0.0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const double n = static_cast<double>(sources[i].texts.size() + sources[i].records.size());
    w[i] = std::pow(n, 1.0 / temperature);
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

int sample_source(const std::vector<Source>& sources, double temperature,
                  std::mt19937_64& rng) {
  const auto probs = source_mixture(sources, temperature);
  double u = uniform01(rng);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    u -= probs[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

namespace {

// First `k` indices of a partial Fisher-Yates shuffle: a uniform sample
// without replacement.
std::vector<int> sample_indices(int population, int k, std::mt19937_64& rng) {
  std::vector<int> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, population);
  for (int i = 0; i < k; ++i) {
    const int j = i + uniform_int(rng, population - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

MixedBatch next_batch(const std::vector<Source>& sources, int batch_size, double temperature,
                      std::mt19937_64& rng) {
  MixedBatch batch;
  batch.source_index = sample_source(sources, temperature, rng);
  const Source& src = sources[static_cast<std::size_t>(batch.source_index)];
  batch.format = src.format;
  for (int i : sample_indices(static_cast<int>(src.texts.size()), batch_size, rng)) {
    batch.texts.push_back(src.texts[static_cast<std::size_t>(i)]);
  }
  for (int i : sample_indices(static_cast<int>(src.records.size()), batch_size, rng)) {
    batch.records.push_back(src.records[static_cast<std::size_t>(i)]);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Synthetic world
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kAdjectives = {"Blue",  "Golden", "Silver", "Crimson",
                                              "Jade",  "Amber",  "Ivory",  "Velvet"};
const std::vector<std::string> kNouns = {"Fox",    "Lion",    "Harbor", "Garden",
                                         "Palace", "Lantern", "Orchid", "Cottage"};

struct RelationSpec {
  std::string name;
  std::vector<std::string> values;       // empty: values are entity names
  std::array<std::string, 3> templates;  // "{v}" marks the value slot
};

const std::vector<RelationSpec>& relation_inventory() {
  static const std::vector<RelationSpec> inv = {
      {"eatType",
       {"pub", "restaurant", "coffee shop", "bistro", "cafe", "brasserie"},
       {"is a {v}", "operates as a {v}", "is run as a {v}"}},
      {"food",
       {"Italian", "French", "Japanese", "Indian", "Chinese", "Thai"},
       {"serves {v} food", "offers {v} cuisine", "specialises in {v} dishes"}},
      {"area",
       {"riverside", "city centre", "suburbs", "old town", "harbour district",
        "market square"},
       {"is located in the {v}", "can be found in the {v}", "sits in the {v}"}},
      {"priceRange",
       {"cheap", "moderate", "expensive", "premium", "mid-range", "budget"},
       {"has {v} prices", "charges {v} prices", "keeps prices {v}"}},
      {"rating",
       {"excellent", "average", "poor", "outstanding", "decent", "mediocre"},
       {"has a rating of {v}", "earned a rating of {v}", "is rated {v}"}},
      {"near", {}, {"stands near {v}", "is close to {v}", "lies near {v}"}},
      {"owner",
       {"Marta Reyes", "Viktor Hale", "June Park", "Omar Sand", "Ada Lome", "Rex Vane"},
       {"is owned by {v}", "belongs to {v}", "is managed by {v}"}},
      {"founded",
       {"1985", "1992", "2001", "2010", "1978", "1969"},
       {"was founded in {v}", "opened in {v}", "dates from {v}"}},
  };
  return inv;
}

std::string fill_template(const std::string& tpl, const std::string& value) {
  const auto pos = tpl.find("{v}");
  return tpl.substr(0, pos) + value + tpl.substr(pos + 3);
}

struct WorldGrammar {
  std::vector<std::string> entities;
  std::vector<RelationSpec> relations;
  int n_templates{3};
  int max_triples{4};

  int relation_index(const std::string& name) const {
    for (std::size_t i = 0; i < relations.size(); ++i) {
      if (relations[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }
};

WorldGrammar make_grammar(const WorldConfig& cfg) {
  const auto& inv = relation_inventory();
  if (cfg.n_entities < 2 ||
      cfg.n_entities > static_cast<int>(kAdjectives.size() * kNouns.size())) {
    throw ConfigError("n_entities out of range");
  }
  if (cfg.n_relations < 1 || cfg.n_relations > static_cast<int>(inv.size())) {
    throw ConfigError("n_relations out of range");
  }
  if (cfg.values_per_relation < 1 || cfg.values_per_relation > 6) {
    throw ConfigError("values_per_relation out of range");
  }
  // 1 is allowed as the degenerate no-diversity world.
  if (cfg.n_templates_per_relation < 1 || cfg.n_templates_per_relation > 3) {
    throw ConfigError("n_templates_per_relation must be in [1, 3]");
  }
  if (cfg.max_triples < 1 || cfg.max_triples > cfg.n_relations) {
    throw ConfigError("max_triples must be in [1, n_relations]");
  }
  if (cfg.texts_per_source < 1 || cfg.records_per_source < 1 ||
      cfg.eval_records_per_source < 0 || cfg.eval_refs_per_record < 1) {
    throw ConfigError("degenerate source sizes");
  }
  if (cfg.source_formats.empty()) throw ConfigError("no source formats");

  WorldGrammar g;
  for (int i = 0; i < cfg.n_entities; ++i) {
    g.entities.push_back(kAdjectives[static_cast<std::size_t>(i) / kNouns.size()] + " " +
                         kNouns[static_cast<std::size_t>(i) % kNouns.size()]);
  }
  for (int i = 0; i < cfg.n_relations; ++i) {
    RelationSpec spec = inv[static_cast<std::size_t>(i)];
    if (!spec.values.empty()) {
      spec.values.resize(static_cast<std::size_t>(cfg.values_per_relation));
    }
    g.relations.push_back(std::move(spec));
  }
  g.n_templates = cfg.n_templates_per_relation;
  g.max_triples = cfg.max_triples;
  return g;
}

StructuredRecord sample_record(const WorldGrammar& g, Format format, std::mt19937_64& rng) {
  StructuredRecord rec;
  rec.format = format;
  const std::string& subject =
      g.entities[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(g.entities.size())))];
  const int k = 1 + uniform_int(rng, g.max_triples);
  std::vector<int> rel_idx(g.relations.size());
  std::iota(rel_idx.begin(), rel_idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + uniform_int(rng, static_cast<int>(rel_idx.size()) - i);
    std::swap(rel_idx[static_cast<std::size_t>(i)], rel_idx[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < k; ++i) {
    const RelationSpec& rel = g.relations[static_cast<std::size_t>(rel_idx[static_cast<std::size_t>(i)])];
    std::string value;
    if (rel.values.empty()) {
      do {
        value = g.entities[static_cast<std::size_t>(
            uniform_int(rng, static_cast<int>(g.entities.size())))];
      } while (value == subject);
    } else {
      value = rel.values[static_cast<std::size_t>(
          uniform_int(rng, static_cast<int>(rel.values.size())))];
    }
    rec.triples.push_back({subject, rel.name, value});
  }
  if (format == Format::Totto) rec.meta = TottoMeta{subject, "Overview"};
  return rec;
}

std::string render_text(const WorldGrammar& g, const StructuredRecord& rec,
                        const std::vector<int>& template_choice) {
  std::string out = rec.triples[0].subject;
  for (std::size_t i = 0; i < rec.triples.size(); ++i) {
    const int ri = g.relation_index(rec.triples[i].relation);
    out += (i == 0 ? " " : " and ");
    out += fill_template(g.relations[static_cast<std::size_t>(ri)]
                             .templates[static_cast<std::size_t>(template_choice[i])],
                         rec.triples[i].object);
  }
  return out;
}

std::string sample_text(const WorldGrammar& g, const StructuredRecord& rec,
                        std::mt19937_64& rng) {
  std::vector<int> choice(rec.triples.size());
  for (auto& c : choice) c = uniform_int(rng, g.n_templates);
  return render_text(g, rec, choice);
}

int seq_tokens(const std::string& s) {
  return static_cast<int>(whitespace_tokens(s).size());
}

}  // namespace

std::vector<std::string> world_entity_inventory(const WorldConfig& config) {
  return make_grammar(config).entities;
}

std::vector<std::string> world_relation_inventory(const WorldConfig& config) {
  std::vector<std::string> names;
  for (const auto& r : make_grammar(config).relations) names.push_back(r.name);
  return names;
}

std::vector<std::string> world_texts_for_record(const StructuredRecord& record,
                                                const WorldConfig& config) {
  const WorldGrammar g = make_grammar(config);
  const std::size_t n = record.triples.size();
  std::vector<std::string> out;
  std::vector<int> choice(n, 0);
  while (true) {
    out.push_back(render_text(g, record, choice));
    std::size_t i = 0;
    while (i < n && ++choice[i] == g.n_templates) choice[i++] = 0;
    if (i == n) break;
  }
  return out;
}

std::vector<Source> generate_synthetic_world(std::uint64_t seed, const WorldConfig& cfg) {
  const WorldGrammar g = make_grammar(cfg);
  std::mt19937_64 rng(seed);
  std::vector<Source> sources;

  const int budget = cfg.max_len - 5;  // frame, prefix, style slot
  for (std::size_t si = 0; si < cfg.source_formats.size(); ++si) {
    const Format format = cfg.source_formats[si];
    Source src;
    src.name = "s" + std::to_string(si) + "_" + format_name(format);
    src.format = format;

    auto draw_pair = [&]() -> EvalPair {
      for (int attempt = 0; attempt < 64; ++attempt) {
        StructuredRecord rec = sample_record(g, format, rng);
        const std::string text = sample_text(g, rec, rng);
        if (seq_tokens(text) <= budget && seq_tokens(serialize(rec)) <= budget) {
          return {text, rec};
        }
      }
      throw ConfigError("max_len too small for the configured grammar");
    };

    // De-alignment: texts and records come from disjoint ground-truth halves.
    for (int i = 0; i < cfg.texts_per_source; ++i) {
      EvalPair p = draw_pair();
      src.train_pairs.push_back(p);
      src.texts.push_back(p.text);
    }
    for (int i = 0; i < cfg.records_per_source; ++i) {
      EvalPair p = draw_pair();
      src.train_pairs.push_back(p);
      src.records.push_back(p.record);
    }
    for (int i = 0; i < cfg.eval_records_per_source; ++i) {
      const EvalPair first = draw_pair();
      const StructuredRecord& rec = first.record;
      std::set<std::string> refs{first.text};
      const std::size_t distinct = static_cast<std::size_t>(
          std::pow(g.n_templates, static_cast<double>(rec.triples.size())));
      const std::size_t want =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.eval_refs_per_record), distinct);
      int guard = 0;
      while (refs.size() < want && ++guard < 1000) refs.insert(sample_text(g, rec, rng));
      for (const auto& t : refs) src.eval_pairs.push_back({t, rec});
    }

    // Every pair must be derivable from the template grammar.
    for (const auto& p : src.train_pairs) {
      const auto all = world_texts_for_record(p.record, cfg);
      if (std::find(all.begin(), all.end(), p.text) == all.end()) {
        throw ConfigError("generated text not derivable from its record");
      }
    }
    sources.push_back(std::move(src));
  }
  return sources;
}

// ---------------------------------------------------------------------------
// Disk layout
// ---------------------------------------------------------------------------

namespace fs = std::filesystem;

void save_corpus(const std::vector<Source>& sources, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& src : sources) {
    const fs::path sdir = fs::path(dir) / src.name;
    fs::create_directories(sdir);
    {
      std::ofstream out(sdir / "format");
      out << format_name(src.format) << "\n";
    }
    {
      std::ofstream out(sdir / "texts.txt");
      for (const auto& t : src.texts) out << t << "\n";
    }
    {
      std::ofstream out(sdir / "records.txt");
      for (const auto& r : src.records) out << serialize(r) << "\n";
    }
    if (!src.eval_pairs.empty()) {
      std::ofstream out(sdir / "eval.tsv");
      for (const auto& p : src.eval_pairs) out << p.text << "\t" << serialize(p.record) << "\n";
    }
    if (!src.train_pairs.empty()) {
      std::ofstream out(sdir / "pairs.tsv");
      for (const auto& p : src.train_pairs) out << p.text << "\t" << serialize(p.record) << "\n";
    }
  }
}

namespace {

std::vector<EvalPair> load_pairs(const fs::path& path, Format format) {
  std::vector<EvalPair> out;
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected text<TAB>record");
    }
    auto rec = parse(line.substr(tab + 1), format);
    if (!parse_ok(rec)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " +
                               parse_error(rec).reason);
    }
    out.push_back({normalize_ws(line.substr(0, tab)), parse_record(rec)});
  }
  return out;
}

}  // namespace

std::vector<Source> load_corpus(const std::string& dir) {
  std::vector<fs::path> sdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) sdirs.push_back(entry.path());
  }
  std::sort(sdirs.begin(), sdirs.end());
  std::vector<Source> sources;
  for (const auto& sdir : sdirs) {
    Source src;
    src.name = sdir.filename().string();
    {
      std::ifstream in(sdir / "format");
      std::string name;
      if (!(in >> name)) throw std::runtime_error("missing format file in " + sdir.string());
      src.format = format_from_name(name);
    }
    {
      std::ifstream in(sdir / "texts.txt");
      std::string line;
      while (std::getline(in, line)) {
        const std::string t = normalize_ws(line);
        if (!t.empty()) src.texts.push_back(t);
      }
    }
    {
      std::ifstream in(sdir / "records.txt");
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (normalize_ws(line).empty()) continue;
        auto rec = parse(line, src.format);
        if (!parse_ok(rec)) {
          throw std::runtime_error((sdir / "records.txt").string() + ":" +
                                   std::to_string(lineno) + ": " + parse_error(rec).reason);
        }
        src.records.push_back(parse_record(rec));
      }
    }
    if (fs::exists(sdir / "eval.tsv")) src.eval_pairs = load_pairs(sdir / "eval.tsv", src.format);
    if (fs::exists(sdir / "pairs.tsv"))
      src.train_pairs = load_pairs(sdir / "pairs.tsv", src.format);
    sources.push_back(std::move(src));
  }
  if (sources.empty()) throw EmptyCorpus("no source directories under " + dir);
  return sources;
}

}  // namespace dtx
