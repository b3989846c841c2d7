#include "dtx/inference.hpp"

#include <algorithm>
#include <cmath>

namespace dtx {

namespace {

// Stable log-softmax of one logits row.
std::vector<double> log_softmax(const std::vector<double>& logits) {
  double mx = -1e300;
  for (double x : logits) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double normalized(double logprob, int gen_len, double alpha) {
  if (alpha == 0.0) return logprob;
  return logprob / std::pow(static_cast<double>(gen_len), alpha);
}

}  // namespace

DecodeResult greedy_decode(const Model& model, const nn::Array& memory, const nn::Array& cond,
                           int max_len) {
  const int cap = std::min(max_len, model.config().max_len);
  Model::Decoder dec(model, memory, cond);
  TokenSeq seq;
  seq.ids.push_back(Vocab::kBos);
  double logprob = 0.0;
  int prev = Vocab::kBos;
  for (int t = 0; t < cap; ++t) {
    const auto lp = log_softmax(dec.step(prev));
    int best = 0;
    for (int j = 1; j < static_cast<int>(lp.size()); ++j) {
      if (lp[static_cast<std::size_t>(j)] > lp[static_cast<std::size_t>(best)]) best = j;
    }
    // At the cap the sequence is closed unconditionally.
    if (t == cap - 1) best = Vocab::kEos;
    logprob += lp[static_cast<std::size_t>(best)];
    seq.ids.push_back(best);
    if (best == Vocab::kEos) break;
    prev = best;
  }
  const int gen_len = seq.length() - 1;
  return {seq, normalized(logprob, gen_len, 0.0)};
}

DecodeResult beam_decode(const Model& model, const nn::Array& memory, const nn::Array& cond,
                         const BeamConfig& beam) {
  if (beam.n_beams < 1) throw std::invalid_argument("n_beams must be >= 1");
  if (beam.n_beams == 1 && beam.length_penalty == 0.0) {
    return greedy_decode(model, memory, cond, beam.max_len);
  }
  const int cap = std::min(beam.max_len, model.config().max_len);

  struct Beam {
    std::vector<int> tokens;  // generated tokens, no BOS
    double logprob{0.0};
    Model::Decoder dec;
    int prev{Vocab::kBos};
  };
  std::vector<Beam> live;
  live.push_back({{}, 0.0, Model::Decoder(model, memory, cond), Vocab::kBos});

  struct Done {
    std::vector<int> tokens;
    double norm_score;
  };
  std::vector<Done> done;

  for (int t = 0; t < cap && !live.empty(); ++t) {
    struct Cand {
      std::size_t beam_idx;
      int token;
      double logprob;
    };
    std::vector<Cand> cands;
    std::vector<std::vector<double>> lps(live.size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      lps[b] = log_softmax(live[b].dec.step(live[b].prev));
      if (t == cap - 1) {
        // Force closure at the cap.
        cands.push_back({b, Vocab::kEos, live[b].logprob + lps[b][Vocab::kEos]});
        continue;
      }
      // Top n_beams tokens of this beam suffice for the global top n_beams.
      std::vector<int> idx(lps[b].size());
      for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<int>(j);
      const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(beam.n_beams), idx.size());
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                        [&](int a, int c) {
                          if (lps[b][static_cast<std::size_t>(a)] != lps[b][static_cast<std::size_t>(c)])
                            return lps[b][static_cast<std::size_t>(a)] > lps[b][static_cast<std::size_t>(c)];
                          return a < c;
                        });
      for (std::size_t j = 0; j < keep; ++j) {
        cands.push_back({b, idx[j], live[b].logprob + lps[b][static_cast<std::size_t>(idx[j])]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b2) {
      if (a.logprob != b2.logprob) return a.logprob > b2.logprob;
      if (a.beam_idx != b2.beam_idx) return a.beam_idx < b2.beam_idx;
      return a.token < b2.token;
    });

    std::vector<Beam> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) >= beam.n_beams &&
          static_cast<int>(done.size()) >= beam.n_beams) {
        break;
      }
      if (c.token == Vocab::kEos) {
        if (static_cast<int>(done.size()) < 4 * beam.n_beams) {
          std::vector<int> toks = live[c.beam_idx].tokens;
          toks.push_back(Vocab::kEos);
          done.push_back({std::move(toks),
                          normalized(c.logprob, static_cast<int>(live[c.beam_idx].tokens.size()) + 1,
                                     beam.length_penalty)});
        }
      } else if (static_cast<int>(next.size()) < beam.n_beams) {
        Beam nb{live[c.beam_idx].tokens, c.logprob, live[c.beam_idx].dec, c.token};
        nb.tokens.push_back(c.token);
        next.push_back(std::move(nb));
      }
    }
    live = std::move(next);
  }

  if (done.empty()) {
    // Cannot happen (closure is forced at the cap), but keep a safe fallback.
    return greedy_decode(model, memory, cond, beam.max_len);
  }
  const Done* best = &done[0];
  for (const auto& d : done) {
    if (d.norm_score > best->norm_score) best = &d;
  }
  TokenSeq seq;
  seq.ids.push_back(Vocab::kBos);
  seq.ids.insert(seq.ids.end(), best->tokens.begin(), best->tokens.end());
  return {seq, best->norm_score};
}

T2dResult t2d(const Model& model, const Vocab& vocab, const std::string& text, Format format,
              const BeamConfig& beam) {
  const TokenSeq input = encode(text, vocab, TaskPrefix::Data);
  const nn::Array memory = model.encode_array(input);
  const nn::Array cond = model.format_embedding_array(format);
  const DecodeResult decoded = beam_decode(model, memory, cond, beam);
  T2dResult out;
  out.raw = decode(decoded.seq, vocab);
  out.score = decoded.score;
  auto parsed = parse(out.raw, format);
  if (parse_ok(parsed)) {
    out.parsed = parse_record(parsed);
  } else {
    out.parsed = parse_error(parsed);
  }
  return out;
}

namespace {

// BOS + text prefix + [STYLE] + draft payload + EOS, truncated to max_len.
TokenSeq styled_from_draft(const TokenSeq& draft, int max_len) {
  TokenSeq styled;
  styled.ids = {Vocab::kBos, Vocab::kGenerate, Vocab::kTextPrefix, Vocab::kStyle};
  const std::size_t payload_cap = static_cast<std::size_t>(std::max(0, max_len - 5));
  for (int id : draft.ids) {
    if (id != Vocab::kBos && id != Vocab::kEos &&
        styled.ids.size() - 4 < payload_cap) {
      styled.ids.push_back(id);
    }
  }
  styled.ids.push_back(Vocab::kEos);
  return styled;
}

}  // namespace

DecodeResult d2t_first_pass(const Model& model, const Vocab& vocab,
                            const StructuredRecord& record, int max_len) {
  const TokenSeq input = encode(serialize(record), vocab, TaskPrefix::Text);
  const nn::Array memory = model.encode_array(input);
  return greedy_decode(model, memory, model.zero_style_array(), max_len);
}

std::string d2t(const Model& model, const Vocab& vocab, const StructuredRecord& record,
                const BeamConfig& beam) {
  const TokenSeq input = encode(serialize(record), vocab, TaskPrefix::Text);
  const nn::Array memory = model.encode_array(input);
  const DecodeResult draft = greedy_decode(model, memory, model.zero_style_array(), beam.max_len);
  const nn::Array style = model.style_mu_array(styled_from_draft(draft.seq, model.config().max_len));
  return decode(beam_decode(model, memory, style, beam).seq, vocab);
}

std::vector<std::string> d2t_diverse(const Model& model, const Vocab& vocab,
                                     const StructuredRecord& record, int k,
                                     const BeamConfig& beam, std::mt19937_64& rng) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const TokenSeq input = encode(serialize(record), vocab, TaskPrefix::Text);
  const nn::Array memory = model.encode_array(input);
  const DecodeResult draft = greedy_decode(model, memory, model.zero_style_array(), beam.max_len);
  const TokenSeq styled = styled_from_draft(draft.seq, model.config().max_len);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const nn::Array style = model.style_sample_array(styled, rng);
    out.push_back(decode(beam_decode(model, memory, style, beam).seq, vocab));
  }
  return out;
}

}  // namespace dtx
