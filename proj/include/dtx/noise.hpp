// noise.hpp -- the five corruption functions for the denoising objective:
// swap, drop, blank, repeat and the rule-based cross-modal pair generators.

#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>

#include "dtx/corpus.hpp"
#include "dtx/formats.hpp"

namespace dtx {

struct NoiseConfig {
  double p_drop = 0.1;
  double p_blank = 0.2;
  double p_repeat = 0.2;
  int swap_window = 3;
  bool enable_swap = true;
  bool enable_drop = true;
  bool enable_blank = true;
  bool enable_repeat = true;
  bool enable_rule = true;
  double rule_mix = 0.2;  // share of denoising pairs replaced by rule pairs
};

// All four structural noises act on payload tokens only: framing tokens and
// linearization grammar tokens are fixed points.

// Bounded shuffle; every token moves at most `window` positions.
TokenSeq swap_noise(const TokenSeq& seq, int window, std::mt19937_64& rng);
// Removes payload tokens independently, but never the final one.
TokenSeq drop_noise(const TokenSeq& seq, double p_drop, std::mt19937_64& rng);
// Replaces payload tokens with BLANK; length preserved.
TokenSeq blank_noise(const TokenSeq& seq, double p_blank, std::mt19937_64& rng);
// Duplicates payload tokens in place.
TokenSeq repeat_noise(const TokenSeq& seq, double p_repeat, std::mt19937_64& rng);

// Enabled structural noises in fixed order swap -> drop -> blank -> repeat.
TokenSeq corrupt(const TokenSeq& seq, const NoiseConfig& config, std::mt19937_64& rng);

// (linearized record, rule pseudo-text) training pair.
std::pair<std::string, std::string> rule_noise_data_to_text(const StructuredRecord& record);

// (text, serialized pseudo-record) built from k in [1,3] sampled increasing
// token triples. Empty when the text has fewer than 3 usable payload tokens.
std::optional<std::pair<std::string, std::string>> rule_noise_text_to_data(
    const std::string& text, Format format, std::mt19937_64& rng);

}  // namespace dtx
