// metrics.hpp -- corpus BLEU-4, ROUGE-L, entity/relation precision-recall,
// graph-path SemBLEU, Self-BLEU and Distinct-n.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtx/formats.hpp"

namespace dtx {

class LengthMismatch : public std::runtime_error {
 public:
  explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};
class TooFew : public std::runtime_error {
 public:
  explicit TooFew(const std::string& what) : std::runtime_error(what) {}
};

struct PRF {
  double precision{0.0};
  double recall{0.0};
  double f1{0.0};
};

struct EvalReport {
  double bleu{0.0};
  double rouge_l{0.0};
  double self_bleu{0.0};
  double distinct1{0.0};
  double distinct2{0.0};
  PRF entity;
  PRF relation;
  double sembleu{0.0};
  double format_error_pct{0.0};
};

// Corpus BLEU-4 in [0, 100]: clipped n-gram precision with +1 smoothing for
// n >= 2, brevity penalty against closest reference lengths.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::vector<std::string>>& reference_lists);

// LCS F-measure with beta = 1.2, max over references; [0, 100].
double rouge_l(const std::string& hypothesis, const std::vector<std::string>& references);

// Entity/relation matching normalization: lowercase, trim, collapse interior
// whitespace, strip trailing punctuation.
std::string normalize_for_match(const std::string& s);

// Per-pair scores in [0, 100]; entities are normalized subjects+objects,
// relations are full normalized triples.
std::pair<PRF, PRF> entity_relation_prf(const StructuredRecord& predicted,
                                        const StructuredRecord& gold);

// Micro-averaged corpus accumulation; failed predictions keep their gold
// counts in the denominators.
class PrfAccumulator {
 public:
  void add(const StructuredRecord& predicted, const StructuredRecord& gold);
  void add_failed(const StructuredRecord& gold);
  void merge(const PrfAccumulator& other);
  PRF entity() const;
  PRF relation() const;

 private:
  long long ent_match_{0}, ent_pred_{0}, ent_gold_{0};
  long long rel_match_{0}, rel_pred_{0}, rel_gold_{0};
};

// BLEU over graph path n-grams (node and edge labels along directed walks),
// order k, brevity penalty on 1-gram counts; [0, 100].
double sembleu(const StructuredRecord& predicted, const StructuredRecord& gold, int k = 3);

class SembleuAccumulator {
 public:
  explicit SembleuAccumulator(int k = 3) : k_(k) {}
  void add(const StructuredRecord& predicted, const StructuredRecord& gold);
  void add_failed(const StructuredRecord& gold);
  void merge(const SembleuAccumulator& other);
  double score() const;

 private:
  int k_;
  std::vector<long long> match_, total_;
  long long hyp_unigrams_{0}, ref_unigrams_{0};
};

// Mean over i of bleu(gen_i vs the others); needs >= 2 generations.
double self_bleu(const std::vector<std::string>& generations);

// |unique n-grams| / total generated tokens, in [0, 1].
double distinct_n(const std::vector<std::string>& generations, int n);

}  // namespace dtx
