// Shared test helpers: reference linearization strings, a random record
// generator for property tests, and small numeric utilities.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "dtx/formats.hpp"

namespace testutil {

// --- reference linearizations -------------------------------------------

inline dtx::StructuredRecord nord_kg_record() {
  dtx::StructuredRecord r;
  r.format = dtx::Format::KG;
  r.triples = {
      {"Nord (Year of No Light album)", "artist", "Year of No Light"},
      {"Nord (Year of No Light album)", "genre", "Post-metal"},
      {"Nord (Year of No Light album)", "record label", "Crucial Blast"},
  };
  return r;
}

inline const char* nord_kg_string() {
  return "[HEAD] Nord (Year of No Light album) [TYPE] artist [TAIL] Year of No Light "
         "[HEAD] Nord (Year of No Light album) [TYPE] genre [TAIL] Post-metal "
         "[HEAD] Nord (Year of No Light album) [TYPE] record label [TAIL] Crucial Blast";
}

// The rule pseudo-text lists the triples in a different order than the
// linearized input does.
inline dtx::StructuredRecord nord_rule_order_record() {
  dtx::StructuredRecord r;
  r.format = dtx::Format::KG;
  r.triples = {
      {"Nord (Year of No Light album)", "artist", "Year of No Light"},
      {"Nord (Year of No Light album)", "record label", "Crucial Blast"},
      {"Nord (Year of No Light album)", "genre", "Post-metal"},
  };
  return r;
}

inline const char* nord_rule_string() {
  return "Nord (Year of No Light album) artist Year of No Light and "
         "Nord (Year of No Light album) record label Crucial Blast and "
         "Nord (Year of No Light album) genre Post-metal";
}

inline dtx::StructuredRecord ara_record() {
  dtx::StructuredRecord r;
  r.format = dtx::Format::Tripleset;
  r.triples = {
      {"ARA Veinticinco de Mayo (V-2)", "length", "192000.0 (millimetres)"},
      {"ARA Veinticinco de Mayo (V-2)", "country", "Argentina"},
  };
  return r;
}

inline const char* ara_string() {
  return "ARA Veinticinco de Mayo (V-2) : length : 192000.0 (millimetres) | "
         "ARA Veinticinco de Mayo (V-2) : country : Argentina";
}

inline const char* ara_rule_string() {
  return "ARA Veinticinco de Mayo (V-2) length 192000.0 (millimetres) and "
         "ARA Veinticinco de Mayo (V-2) country Argentina";
}

inline dtx::StructuredRecord phoenix_record() {
  dtx::StructuredRecord r;
  r.format = dtx::Format::MR;
  r.triples = {
      {"The Phoenix", "eatType", "pub"},
      {"The Phoenix", "food", "French"},
      {"The Phoenix", "priceRange", "more than £30"},
      {"The Phoenix", "customer rating", "5 out of 5"},
      {"The Phoenix", "area", "riverside"},
      {"The Phoenix", "familyFriendly", "no"},
      {"The Phoenix", "near", "Crowne Plaza Hotel"},
  };
  return r;
}

inline const char* phoenix_string() {
  return "name[The Phoenix], eatType[pub], food[French], priceRange[more than £30], "
         "customer rating[5 out of 5], area[riverside], familyFriendly[no], "
         "near[Crowne Plaza Hotel]";
}

// The rule output additionally verbalizes the `name` attribute itself, so the
// record that reproduces it carries an explicit name triple (legal as a
// triple, though not serializable back to MR).
inline dtx::StructuredRecord phoenix_rule_order_record() {
  dtx::StructuredRecord r;
  r.format = dtx::Format::KG;
  r.triples = {
      {"The Phoenix", "eatType", "pub"},
      {"The Phoenix", "priceRange", "more than £30"},
      {"The Phoenix", "area", "riverside"},
      {"The Phoenix", "near", "Crowne Plaza Hotel"},
      {"The Phoenix", "name", "The Phoenix"},
      {"The Phoenix", "customer rating", "5 out of 5"},
      {"The Phoenix", "food", "French"},
      {"The Phoenix", "familyFriendly", "no"},
  };
  return r;
}

inline const char* phoenix_rule_string() {
  return "The Phoenix eatType pub and The Phoenix priceRange more than £30 and "
         "The Phoenix area riverside and The Phoenix near Crowne Plaza Hotel and "
         "The Phoenix name The Phoenix and The Phoenix customer rating 5 out of 5 and "
         "The Phoenix food French and The Phoenix familyFriendly no";
}

inline dtx::StructuredRecord golovkin_record() {
  dtx::StructuredRecord r;
  r.format = dtx::Format::Totto;
  r.meta = dtx::TottoMeta{"Gennady Golovkin vs. Daniel Jacobs", "CompuBox stats"};
  r.triples = {
      {"Gennady Golovkin vs. Daniel Jacobs", "Fighter", "Golovkin"},
      {"Gennady Golovkin vs. Daniel Jacobs", "Total punches", "231/615"},
      {"Gennady Golovkin vs. Daniel Jacobs", "Fighter", "Jacobs"},
      {"Gennady Golovkin vs. Daniel Jacobs", "Total punches", "175/541"},
  };
  return r;
}

inline const char* golovkin_string() {
  return "<page_title> Gennady Golovkin vs. Daniel Jacobs </page_title> "
         "<section_title> CompuBox stats </section_title> "
         "<table> <cell> Golovkin <col_header> Fighter </col_header> </cell> "
         "<cell> 231/615 <col_header> Total punches </col_header> </cell> "
         "<cell> Jacobs <col_header> Fighter </col_header> </cell> "
         "<cell> 175/541 <col_header> Total punches </col_header> </cell> </table>";
}

inline const char* golovkin_rule_string() {
  return "Gennady Golovkin vs. Daniel Jacobs and CompuBox stats and Golovkin Fighter and "
         "231/615 Total punches and Jacobs Fighter and 175/541 Total punches";
}

// --- random record generator ----------------------------------------------

// Word atoms chosen to exercise multi-word fields, punctuation, digits and
// embedded (but legal) separator characters.
inline const std::vector<std::string>& field_atoms() {
  static const std::vector<std::string> atoms = {
      "Alpha", "beta",   "Gamma",  "delta",  "Echo",    "12:30",  "x9",
      "(rev)", "Fox",    "lantern", "North", "pier-7",  "O'Hara", "vs.",
      "Super", "public", "1899",   "title",  "Mayo",
  };
  return atoms;
}

inline std::string random_field(std::mt19937_64& rng, int max_words = 3) {
  const auto& atoms = field_atoms();
  std::uniform_int_distribution<int> n_words(1, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
  std::string out;
  const int n = n_words(rng);
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += atoms[pick(rng)];
  }
  return out;
}

inline dtx::StructuredRecord random_record(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> fmt_dist(0, dtx::kNumFormats - 1);
  std::uniform_int_distribution<int> n_triples(1, 4);
  std::uniform_int_distribution<int> coin(0, 99);

  dtx::StructuredRecord r;
  r.format = dtx::format_from_index(fmt_dist(rng));
  if (r.format == dtx::Format::Totto) {
    dtx::TottoMeta m;
    if (coin(rng) < 70) m.page_title = random_field(rng);
    if (coin(rng) < 70) m.section_title = random_field(rng, 2);
    r.meta = m;
  }
  // MR groups runs by subject, so reuse subjects to exercise grouping.
  std::vector<std::string> subjects;
  const int n = n_triples(rng);
  for (int i = 0; i < n; ++i) {
    std::string subject;
    if (!subjects.empty() && coin(rng) < 50) {
      subject = subjects.back();
    } else if (r.format == dtx::Format::Totto && r.meta && !r.meta->page_title.empty() &&
               coin(rng) < 40) {
      subject = r.meta->page_title;  // exercises the row-header omission
    } else {
      subject = random_field(rng);
    }
    subjects.push_back(subject);
    std::string relation = random_field(rng, 2);
    while (relation == "name") relation = random_field(rng, 2);
    r.triples.push_back({subject, relation, random_field(rng)});
  }
  return r;
}

}  // namespace testutil
