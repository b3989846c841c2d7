#include "dtx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "dtx/corpus.hpp"

namespace dtx {

namespace {

constexpr int kBleuOrder = 4;

using Counts = std::unordered_map<std::string, long long>;

std::string ngram_key(const std::vector<std::string>& toks, std::size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += toks[start + static_cast<std::size_t>(i)];
  }
  return key;
}

Counts ngram_counts(const std::vector<std::string>& toks, int n) {
  Counts out;
  if (static_cast<int>(toks.size()) >= n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
      out[ngram_key(toks, i, n)]++;
    }
  }
  return out;
}

struct BleuStats {
  std::vector<long long> match = std::vector<long long>(kBleuOrder, 0);
  std::vector<long long> total = std::vector<long long>(kBleuOrder, 0);
  long long hyp_len{0};
  long long ref_len{0};

  void add_sentence(const std::vector<std::string>& hyp,
                    const std::vector<std::vector<std::string>>& refs) {
    hyp_len += static_cast<long long>(hyp.size());
    // Closest reference length; ties resolved toward the shorter one.
    long long best = refs.empty() ? 0 : static_cast<long long>(refs[0].size());
    for (const auto& r : refs) {
      const auto len = static_cast<long long>(r.size());
      const auto d = std::llabs(len - static_cast<long long>(hyp.size()));
      const auto bd = std::llabs(best - static_cast<long long>(hyp.size()));
      if (d < bd || (d == bd && len < best)) best = len;
    }
    ref_len += best;

    for (int n = 1; n <= kBleuOrder; ++n) {
      Counts hyp_counts = ngram_counts(hyp, n);
      Counts clip;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngram_counts(r, n)) {
          auto& cur = clip[g];
          cur = std::max(cur, c);
        }
      }
      long long m = 0, t = 0;
      for (const auto& [g, c] : hyp_counts) {
        t += c;
        auto it = clip.find(g);
        if (it != clip.end()) m += std::min(c, it->second);
      }
      match[static_cast<std::size_t>(n - 1)] += m;
      total[static_cast<std::size_t>(n - 1)] += t;
    }
  }

  double score() const {
    if (hyp_len == 0) return 0.0;
    // Unsmoothed unigram precision; +1 smoothing on higher orders.
    if (match[0] == 0 || total[0] == 0) return 0.0;
    double log_prec = std::log(static_cast<double>(match[0]) / static_cast<double>(total[0]));
    for (int n = 2; n <= kBleuOrder; ++n) {
      const double m = static_cast<double>(match[static_cast<std::size_t>(n - 1)]) + 1.0;
      const double t = static_cast<double>(total[static_cast<std::size_t>(n - 1)]) + 1.0;
      log_prec += std::log(m / t);
    }
    log_prec /= kBleuOrder;
    const double bp =
        hyp_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len) : 1.0;
    return 100.0 * bp * std::exp(log_prec);
  }
};

}  // namespace

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::vector<std::string>>& reference_lists) {
  if (hypotheses.size() != reference_lists.size()) {
    throw LengthMismatch("hypothesis/reference count mismatch");
  }
  for (const auto& refs : reference_lists) {
    if (refs.empty()) throw LengthMismatch("empty reference set");
  }
  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : reference_lists[i]) refs.push_back(whitespace_tokens(r));
    stats.add_sentence(whitespace_tokens(hypotheses[i]), refs);
  }
  return stats.score();
}

double rouge_l(const std::string& hypothesis, const std::vector<std::string>& references) {
  const auto hyp = whitespace_tokens(hypothesis);
  constexpr double beta = 1.2;
  double best = 0.0;
  for (const auto& reference : references) {
    const auto ref = whitespace_tokens(reference);
    if (hyp.empty() || ref.empty()) continue;
    const std::size_t n = hyp.size(), m = ref.size();
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t j = 1; j <= m; ++j) {
        dp[i][j] = hyp[i - 1] == ref[j - 1] ? dp[i - 1][j - 1] + 1
                                            : std::max(dp[i - 1][j], dp[i][j - 1]);
      }
    }
    const double lcs = dp[n][m];
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(n);
    const double r = lcs / static_cast<double>(m);
    const double f = (1 + beta * beta) * r * p / (r + beta * beta * p);
    best = std::max(best, f);
  }
  return 100.0 * best;
}

std::string normalize_for_match(const std::string& s) {
  std::string n = normalize_ws(s);
  for (auto& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  while (!n.empty() && std::string(".,;:!?").find(n.back()) != std::string::npos) {
    n.pop_back();
  }
  while (!n.empty() && n.back() == ' ') n.pop_back();
  return n;
}

namespace {

std::set<std::string> entity_set(const StructuredRecord& r) {
  std::set<std::string> out;
  for (const auto& t : r.triples) {
    out.insert(normalize_for_match(t.subject));
    out.insert(normalize_for_match(t.object));
  }
  out.erase("");
  return out;
}

std::set<std::string> relation_set(const StructuredRecord& r) {
  std::set<std::string> out;
  for (const auto& t : r.triples) {
    out.insert(normalize_for_match(t.subject) + "\x1f" + normalize_for_match(t.relation) +
               "\x1f" + normalize_for_match(t.object));
  }
  return out;
}

long long intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  long long n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

PRF make_prf(long long match, long long pred, long long gold) {
  PRF out;
  out.precision = pred > 0 ? 100.0 * match / pred : 0.0;
  out.recall = gold > 0 ? 100.0 * match / gold : 0.0;
  out.f1 = out.precision + out.recall > 0
               ? 2 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

}  // namespace

std::pair<PRF, PRF> entity_relation_prf(const StructuredRecord& predicted,
                                        const StructuredRecord& gold) {
  PrfAccumulator acc;
  acc.add(predicted, gold);
  return {acc.entity(), acc.relation()};
}

void PrfAccumulator::add(const StructuredRecord& predicted, const StructuredRecord& gold) {
  const auto pe = entity_set(predicted), ge = entity_set(gold);
  const auto pr = relation_set(predicted), gr = relation_set(gold);
  ent_match_ += intersection_size(pe, ge);
  ent_pred_ += static_cast<long long>(pe.size());
  ent_gold_ += static_cast<long long>(ge.size());
  rel_match_ += intersection_size(pr, gr);
  rel_pred_ += static_cast<long long>(pr.size());
  rel_gold_ += static_cast<long long>(gr.size());
}

void PrfAccumulator::add_failed(const StructuredRecord& gold) {
  ent_gold_ += static_cast<long long>(entity_set(gold).size());
  rel_gold_ += static_cast<long long>(relation_set(gold).size());
}

void PrfAccumulator::merge(const PrfAccumulator& other) {
  ent_match_ += other.ent_match_;
  ent_pred_ += other.ent_pred_;
  ent_gold_ += other.ent_gold_;
  rel_match_ += other.rel_match_;
  rel_pred_ += other.rel_pred_;
  rel_gold_ += other.rel_gold_;
}

PRF PrfAccumulator::entity() const { return make_prf(ent_match_, ent_pred_, ent_gold_); }
PRF PrfAccumulator::relation() const { return make_prf(rel_match_, rel_pred_, rel_gold_); }

// --- SemBLEU ------------------------------------------------------------------

namespace {

// Token graph of a ContentGraph: one vertex per node label plus one per edge
// instance (labelled by the relation); edges s -> e -> o. n-grams are label
// sequences along directed walks of n vertices.
struct TokenGraph {
  std::vector<std::string> labels;
  std::vector<std::vector<int>> next;

  explicit TokenGraph(const ContentGraph& g) {
    std::unordered_map<std::string, int> node_idx;
    for (const auto& n : g.nodes) {
      node_idx[n] = static_cast<int>(labels.size());
      labels.push_back(n);
      next.emplace_back();
    }
    for (const auto& e : g.edges) {
      const int ev = static_cast<int>(labels.size());
      labels.push_back(e.relation);
      next.emplace_back();
      next[static_cast<std::size_t>(node_idx[e.src])].push_back(ev);
      next[static_cast<std::size_t>(ev)].push_back(node_idx[e.dst]);
    }
  }

  Counts walk_counts(int n) const {
    Counts out;
    // Iterative breadth expansion of all walks with exactly n vertices.
    std::vector<std::pair<int, std::string>> frontier;
    for (std::size_t v = 0; v < labels.size(); ++v) {
      frontier.emplace_back(static_cast<int>(v), labels[v]);
    }
    for (int step = 1; step < n; ++step) {
      std::vector<std::pair<int, std::string>> grown;
      for (const auto& [v, key] : frontier) {
        for (int w : next[static_cast<std::size_t>(v)]) {
          grown.emplace_back(w, key + '\x1f' + labels[static_cast<std::size_t>(w)]);
        }
      }
      frontier = std::move(grown);
    }
    for (const auto& [v, key] : frontier) out[key]++;
    return out;
  }

  long long unigram_count() const { return static_cast<long long>(labels.size()); }
};

}  // namespace

void SembleuAccumulator::add(const StructuredRecord& predicted, const StructuredRecord& gold) {
  if (match_.empty()) {
    match_.assign(static_cast<std::size_t>(k_), 0);
    total_.assign(static_cast<std::size_t>(k_), 0);
  }
  TokenGraph hyp(to_graph(predicted));
  TokenGraph ref(to_graph(gold));
  hyp_unigrams_ += hyp.unigram_count();
  ref_unigrams_ += ref.unigram_count();
  for (int n = 1; n <= k_; ++n) {
    const Counts h = hyp.walk_counts(n);
    const Counts r = ref.walk_counts(n);
    long long m = 0, t = 0;
    for (const auto& [g, c] : h) {
      t += c;
      auto it = r.find(g);
      if (it != r.end()) m += std::min(c, it->second);
    }
    match_[static_cast<std::size_t>(n - 1)] += m;
    total_[static_cast<std::size_t>(n - 1)] += t;
  }
}

void SembleuAccumulator::add_failed(const StructuredRecord& gold) {
  if (match_.empty()) {
    match_.assign(static_cast<std::size_t>(k_), 0);
    total_.assign(static_cast<std::size_t>(k_), 0);
  }
  ref_unigrams_ += TokenGraph(to_graph(gold)).unigram_count();
}

void SembleuAccumulator::merge(const SembleuAccumulator& other) {
  if (match_.empty()) {
    match_.assign(static_cast<std::size_t>(k_), 0);
    total_.assign(static_cast<std::size_t>(k_), 0);
  }
  if (!other.match_.empty()) {
    for (std::size_t i = 0; i < match_.size(); ++i) {
      match_[i] += other.match_[i];
      total_[i] += other.total_[i];
    }
  }
  hyp_unigrams_ += other.hyp_unigrams_;
  ref_unigrams_ += other.ref_unigrams_;
}

double SembleuAccumulator::score() const {
  if (match_.empty() || hyp_unigrams_ == 0) return 0.0;
  if (match_[0] == 0 || total_[0] == 0) return 0.0;
  double log_prec = std::log(static_cast<double>(match_[0]) / static_cast<double>(total_[0]));
  for (int n = 2; n <= k_; ++n) {
    const double m = static_cast<double>(match_[static_cast<std::size_t>(n - 1)]) + 1.0;
    const double t = static_cast<double>(total_[static_cast<std::size_t>(n - 1)]) + 1.0;
    log_prec += std::log(m / t);
  }
  log_prec /= k_;
  const double bp = hyp_unigrams_ < ref_unigrams_
                        ? std::exp(1.0 - static_cast<double>(ref_unigrams_) / hyp_unigrams_)
                        : 1.0;
  return 100.0 * bp * std::exp(log_prec);
}

double sembleu(const StructuredRecord& predicted, const StructuredRecord& gold, int k) {
  SembleuAccumulator acc(k);
  acc.add(predicted, gold);
  return acc.score();
}

double self_bleu(const std::vector<std::string>& generations) {
  if (generations.size() < 2) throw TooFew("self_bleu needs at least two generations");
  double total = 0.0;
  for (std::size_t i = 0; i < generations.size(); ++i) {
    std::vector<std::string> others;
    for (std::size_t j = 0; j < generations.size(); ++j) {
      if (j != i) others.push_back(generations[j]);
    }
    total += bleu({generations[i]}, {others});
  }
  return total / static_cast<double>(generations.size());
}

double distinct_n(const std::vector<std::string>& generations, int n) {
  std::set<std::string> unique;
  long long total_tokens = 0;
  for (const auto& g : generations) {
    const auto toks = whitespace_tokens(g);
    total_tokens += static_cast<long long>(toks.size());
    if (static_cast<int>(toks.size()) >= n) {
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
        unique.insert(ngram_key(toks, i, n));
      }
    }
  }
  return total_tokens > 0 ? static_cast<double>(unique.size()) / total_tokens : 0.0;
}

}  // namespace dtx
