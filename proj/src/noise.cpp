#include "dtx/noise.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "dtx/rand.hpp"

namespace dtx {

namespace {

bool corruptible(int id) { return !Vocab::is_grammar_id(id); }

// Maximal runs of consecutive corruptible positions. Grammar tokens split
// the payload into units that noise may not cross.
std::vector<std::pair<int, int>> payload_segments(const TokenSeq& seq) {
  std::vector<std::pair<int, int>> segs;
  const int n = seq.length();
  int i = 0;
  while (i < n) {
    if (!corruptible(seq.ids[static_cast<std::size_t>(i)])) {
      ++i;
      continue;
    }
    int j = i;
    while (j < n && corruptible(seq.ids[static_cast<std::size_t>(j)])) ++j;
    segs.emplace_back(i, j);
    i = j;
  }
  return segs;
}

}  // namespace

TokenSeq swap_noise(const TokenSeq& seq, int window, std::mt19937_64& rng) {
  TokenSeq out = seq;
  if (window < 1) return out;
  for (const auto& [b, e] : payload_segments(seq)) {
    const int len = e - b;
    if (len < 2) continue;
    // Sort positions by i + u_i with u_i uniform in [0, window]; the stable
    // sort bounds every displacement by the window.
    std::vector<std::pair<int, int>> keyed(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      keyed[static_cast<std::size_t>(i)] = {i + uniform_int(rng, window + 1), i};
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b2) { return a.first < b2.first; });
    for (int i = 0; i < len; ++i) {
      out.ids[static_cast<std::size_t>(b + i)] =
          seq.ids[static_cast<std::size_t>(b + keyed[static_cast<std::size_t>(i)].second)];
    }
  }
  return out;
}

TokenSeq drop_noise(const TokenSeq& seq, double p_drop, std::mt19937_64& rng) {
  TokenSeq out;
  out.ids.reserve(seq.ids.size());
  int kept_payload = 0;
  int payload_total = 0;
  int last_payload_pos = -1;
  for (int id : seq.ids) {
    if (corruptible(id)) ++payload_total;
  }
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const int id = seq.ids[i];
    if (!corruptible(id)) {
      out.ids.push_back(id);
      continue;
    }
    ++last_payload_pos;
    const bool is_last_payload = last_payload_pos == payload_total - 1;
    // The final payload token survives unconditionally when everything else
    // has been dropped, so the payload never empties.
    if (uniform01(rng) < p_drop && !(is_last_payload && kept_payload == 0)) continue;
    out.ids.push_back(id);
    ++kept_payload;
  }
  return out;
}

TokenSeq blank_noise(const TokenSeq& seq, double p_blank, std::mt19937_64& rng) {
  TokenSeq out = seq;
  for (auto& id : out.ids) {
    if (corruptible(id) && uniform01(rng) < p_blank) id = Vocab::kBlank;
  }
  return out;
}

TokenSeq repeat_noise(const TokenSeq& seq, double p_repeat, std::mt19937_64& rng) {
  TokenSeq out;
  out.ids.reserve(seq.ids.size() * 2);
  for (int id : seq.ids) {
    out.ids.push_back(id);
    if (corruptible(id) && uniform01(rng) < p_repeat) out.ids.push_back(id);
  }
  return out;
}

TokenSeq corrupt(const TokenSeq& seq, const NoiseConfig& config, std::mt19937_64& rng) {
  TokenSeq out = seq;
  if (config.enable_swap) out = swap_noise(out, config.swap_window, rng);
  if (config.enable_drop) out = drop_noise(out, config.p_drop, rng);
  if (config.enable_blank) out = blank_noise(out, config.p_blank, rng);
  if (config.enable_repeat) out = repeat_noise(out, config.p_repeat, rng);
  return out;
}

std::pair<std::string, std::string> rule_noise_data_to_text(const StructuredRecord& record) {
  return {serialize(record), rule_text(record)};
}

namespace {

// Entity-ish surface tokens: capitalized or containing a digit.
bool content_token(const std::string& tok) {
  if (std::isupper(static_cast<unsigned char>(tok[0]))) return true;
  for (char c : tok) {
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
  }
  return false;
}

}  // namespace

std::optional<std::pair<std::string, std::string>> rule_noise_text_to_data(
    const std::string& text, Format format, std::mt19937_64& rng) {
  std::vector<std::string> words;
  for (const auto& tok : whitespace_tokens(text)) {
    if (field_ok_for(tok, format)) words.push_back(tok);
  }
  const int n = static_cast<int>(words.size());
  if (n < 3) return std::nullopt;

  // Subject/object slots prefer entity-ish tokens; the relation slot samples
  // uniformly between them. Falls back to uniform positions when the text
  // has too few content tokens.
  std::vector<int> content;
  for (int i = 0; i < n; ++i) {
    if (content_token(words[static_cast<std::size_t>(i)])) content.push_back(i);
  }

  StructuredRecord rec;
  rec.format = format;
  if (format == Format::Totto) rec.meta = TottoMeta{"", ""};
  const int k = 1 + uniform_int(rng, 3);
  for (int t = 0; t < k; ++t) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      int i, j, l;
      // After half the attempts, drop the content bias (it can be
      // unsatisfiable, e.g. all content tokens adjacent).
      if (content.size() >= 2 && attempt < 8) {
        int a = content[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(content.size())))];
        int c = a;
        while (c == a) {
          c = content[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(content.size())))];
        }
        i = std::min(a, c);
        l = std::max(a, c);
        if (l - i < 2) continue;  // need a strictly interior relation slot
        j = i + 1 + uniform_int(rng, l - i - 1);
      } else {
        int a = uniform_int(rng, n), b = a, c = a;
        while (b == a) b = uniform_int(rng, n);
        while (c == a || c == b) c = uniform_int(rng, n);
        int idx[3] = {a, b, c};
        std::sort(idx, idx + 3);
        i = idx[0];
        j = idx[1];
        l = idx[2];
      }
      const std::string& rel = words[static_cast<std::size_t>(j)];
      if (format == Format::MR && rel == "name") continue;
      rec.triples.push_back(
          {words[static_cast<std::size_t>(i)], rel, words[static_cast<std::size_t>(l)]});
      break;
    }
  }
  if (rec.triples.empty()) return std::nullopt;
  return std::make_pair(normalize_ws(text), serialize(rec));
}

}  // namespace dtx
