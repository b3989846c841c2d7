// inference.hpp -- greedy and beam decoding plus the text-to-data and
// two-step data-to-text conversion procedures.

#pragma once

#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dtx/model.hpp"

namespace dtx {

struct BeamConfig {
  int n_beams = 5;              // data-to-text default; text-to-data uses 8
  int max_len = 64;             // cap on generated tokens (including EOS)
  double length_penalty = 0.0;  // score = logprob / len^alpha
};

struct DecodeResult {
  TokenSeq seq;  // BOS ... EOS framed
  double score;  // length-normalized total log-probability
};

DecodeResult greedy_decode(const Model& model, const nn::Array& memory, const nn::Array& cond,
                           int max_len);

// Deterministic length-normalized beam search; one beam reduces exactly to
// greedy decoding.
DecodeResult beam_decode(const Model& model, const nn::Array& memory, const nn::Array& cond,
                         const BeamConfig& beam);

struct T2dResult {
  std::variant<StructuredRecord, FormatError> parsed;
  std::string raw;  // decoded surface string
  double score{0.0};

  bool ok() const { return std::holds_alternative<StructuredRecord>(parsed); }
  const StructuredRecord& record() const { return std::get<StructuredRecord>(parsed); }
  const FormatError& error() const { return std::get<FormatError>(parsed); }
};

// Conditioned on the target format embedding; the output string is parsed in
// that format and failures surface as FormatError values.
T2dResult t2d(const Model& model, const Vocab& vocab, const std::string& text, Format format,
              const BeamConfig& beam);

// First pass of the data-to-text procedure: greedy decode with the zero
// style vector. Exposed for tests and diagnostics.
DecodeResult d2t_first_pass(const Model& model, const Vocab& vocab,
                            const StructuredRecord& record, int max_len);

// Full procedure: greedy draft with s = 0, style posterior read off the
// draft, final beam decode with s = posterior mean.
std::string d2t(const Model& model, const Vocab& vocab, const StructuredRecord& record,
                const BeamConfig& beam);

// As d2t but the final decode runs k times with reparameterized style
// samples; duplicates allowed.
std::vector<std::string> d2t_diverse(const Model& model, const Vocab& vocab,
                                     const StructuredRecord& record, int k,
                                     const BeamConfig& beam, std::mt19937_64& rng);

}  // namespace dtx
