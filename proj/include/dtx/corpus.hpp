// corpus.hpp -- non-parallel sources, word-level vocabulary, the
// temperature-mixed batch sampler and the synthetic corpus generator.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtx/formats.hpp"

namespace dtx {

struct EvalPair {
  std::string text;
  StructuredRecord record;
};

// One heterogeneous source: a set of texts and a set of records in a single
// format. The two sets carry no alignment; eval_pairs are held out and
// train_pairs keep the generator's ground-truth alignment for the supervised
// baseline only.
struct Source {
  std::string name;
  Format format{Format::KG};
  std::vector<std::string> texts;
  std::vector<StructuredRecord> records;
  std::vector<EvalPair> eval_pairs;
  std::vector<EvalPair> train_pairs;
};

class EmptyCorpus : public std::runtime_error {
 public:
  explicit EmptyCorpus(const std::string& what) : std::runtime_error(what) {}
};

class Vocab {
 public:
  // Reserved ids; dense from zero, ahead of all surface tokens.
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kStyle = 4;   // [STYLE]
  static constexpr int kBlank = 5;   // BLANK
  static constexpr int kGenerate = 6;
  static constexpr int kTextPrefix = 7;  // "text:"
  static constexpr int kDataPrefix = 8;  // "data:"
  static constexpr int kHead = 9;
  static constexpr int kType = 10;
  static constexpr int kTail = 11;
  static constexpr int kColon = 12;
  static constexpr int kPipe = 13;
  static constexpr int kFirstTag = 14;  // 12 totto tags follow
  static constexpr int kReserved = 26;

  Vocab();  // reserved tokens only

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const;

  // True for tokens that carry linearization grammar rather than content
  // (framing, prefixes, markers, separators, tags). Noise leaves them alone.
  static bool is_grammar_id(int id) { return id < kReserved && id != kUnk && id != kBlank; }

  void add(const std::string& token);  // no-op when present

  static Vocab build(const std::vector<Source>& sources, int min_count);

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSeq {
  std::vector<int> ids;

  int length() const { return static_cast<int>(ids.size()); }
  bool operator==(const TokenSeq&) const = default;
};

enum class TaskPrefix { Text, Data };

std::vector<std::string> whitespace_tokens(const std::string& s);

// BOS + prefix tokens (+ optional [STYLE] slot) + payload + EOS.
TokenSeq encode(const std::string& text, const Vocab& vocab, TaskPrefix prefix,
                bool style_slot = false);
// Drops reserved framing/prefix tokens and joins payload with single spaces.
std::string decode(const TokenSeq& seq, const Vocab& vocab);

// Payload ids of a surface string, unframed.
std::vector<int> payload_ids(const std::string& text, const Vocab& vocab);

struct MixedBatch {
  int source_index{0};
  Format format{Format::KG};
  std::vector<std::string> texts;
  std::vector<StructuredRecord> records;
};

// P(i) proportional to (|texts_i| + |records_i|)^(1/T).
int sample_source(const std::vector<Source>& sources, double temperature, std::mt19937_64& rng);
std::vector<double> source_mixture(const std::vector<Source>& sources, double temperature);

MixedBatch next_batch(const std::vector<Source>& sources, int batch_size, double temperature,
                      std::mt19937_64& rng);

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct WorldConfig {
  int n_entities = 24;
  int n_relations = 6;
  int values_per_relation = 4;
  int n_templates_per_relation = 3;  // >= 2
  int max_triples = 4;
  int texts_per_source = 500;
  int records_per_source = 500;
  int eval_records_per_source = 25;
  int eval_refs_per_record = 4;
  std::vector<Format> source_formats = {Format::KG, Format::Tripleset, Format::MR,
                                        Format::Totto};
  int max_len = 64;  // token budget; longer realizations are resampled
};

// Templated ground-truth world: every record admits several surface texts,
// sources are de-aligned by keeping texts and records from disjoint halves.
std::vector<Source> generate_synthetic_world(std::uint64_t seed, const WorldConfig& config);

// Grammar introspection used by tests and tools.
std::vector<std::string> world_entity_inventory(const WorldConfig& config);
std::vector<std::string> world_relation_inventory(const WorldConfig& config);
std::vector<std::string> world_texts_for_record(const StructuredRecord& record,
                                                const WorldConfig& config);

// One directory per source: texts.txt, records.txt, format, eval.tsv and
// pairs.tsv (tab-separated text / serialized record).
void save_corpus(const std::vector<Source>& sources, const std::string& dir);
std::vector<Source> load_corpus(const std::string& dir);

}  // namespace dtx
