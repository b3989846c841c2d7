#include "dtx/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace dtx {

namespace {

struct GroupedRecord {
  StructuredRecord record;
  std::vector<std::string> references;
};

// Eval rows sharing a record form one data-to-text example with multiple
// references.
std::vector<GroupedRecord> group_by_record(const Source& src) {
  std::vector<GroupedRecord> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& pair : src.eval_pairs) {
    const std::string key = serialize(pair.record);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      groups.push_back({canonical(pair.record), {pair.text}});
    } else {
      groups[it->second].references.push_back(pair.text);
    }
  }
  return groups;
}

struct SourceScratch {
  std::vector<std::string> d2t_hyps;
  std::vector<std::vector<std::string>> d2t_refs;
  double rouge_sum{0.0};
  PrfAccumulator prf;
  SembleuAccumulator sembleu;
  int t2d_total{0};
  int t2d_errors{0};
  // Per-seed diversity means over records.
  std::vector<double> self_bleu_by_seed, d1_by_seed, d2_by_seed, bleu_by_seed;
};

SourceScratch evaluate_source(const Model& model, const Vocab& vocab, const Source& src,
                              const EvalOptions& options) {
  SourceScratch out;
  const auto groups = group_by_record(src);

  for (const auto& g : groups) {
    const std::string hyp = d2t(model, vocab, g.record, options.d2t_beam);
    out.d2t_hyps.push_back(hyp);
    out.d2t_refs.push_back(g.references);
    out.rouge_sum += rouge_l(hyp, g.references);
  }

  for (const auto& pair : src.eval_pairs) {
    const T2dResult res = t2d(model, vocab, pair.text, src.format, options.t2d_beam);
    ++out.t2d_total;
    if (res.ok()) {
      out.prf.add(res.record(), pair.record);
      out.sembleu.add(res.record(), pair.record);
    } else {
      ++out.t2d_errors;
      out.prf.add_failed(pair.record);
      out.sembleu.add_failed(pair.record);
    }
  }

  if (options.diversity && !groups.empty()) {
    for (int s = 0; s < options.diversity_seeds; ++s) {
      std::mt19937_64 rng(options.seed + static_cast<std::uint64_t>(s));
      double sb = 0.0, d1 = 0.0, d2 = 0.0, bl = 0.0;
      for (const auto& g : groups) {
        const auto gens =
            d2t_diverse(model, vocab, g.record, options.diversity_k, options.d2t_beam, rng);
        sb += self_bleu(gens);
        d1 += distinct_n(gens, 1);
        d2 += distinct_n(gens, 2);
        std::vector<std::vector<std::string>> refs(gens.size(), g.references);
        bl += bleu(gens, refs);
      }
      out.self_bleu_by_seed.push_back(sb / static_cast<double>(groups.size()));
      out.d1_by_seed.push_back(d1 / static_cast<double>(groups.size()));
      out.d2_by_seed.push_back(d2 / static_cast<double>(groups.size()));
      out.bleu_by_seed.push_back(bl / static_cast<double>(groups.size()));
    }
  }
  return out;
}

void mean_ci(const std::vector<double>& xs, double* mean, double* ci) {
  *mean = 0.0;
  *ci = 0.0;
  if (xs.empty()) return;
  for (double x : xs) *mean += x;
  *mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double var = 0.0;
  for (double x : xs) var += (x - *mean) * (x - *mean);
  var /= static_cast<double>(xs.size() - 1);
  *ci = 1.96 * std::sqrt(var / static_cast<double>(xs.size()));
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"bleu", r.bleu},
          {"rouge_l", r.rouge_l},
          {"self_bleu", r.self_bleu},
          {"distinct1", r.distinct1},
          {"distinct2", r.distinct2},
          {"entity",
           {{"precision", r.entity.precision}, {"recall", r.entity.recall}, {"f1", r.entity.f1}}},
          {"relation",
           {{"precision", r.relation.precision},
            {"recall", r.relation.recall},
            {"f1", r.relation.f1}}},
          {"sembleu", r.sembleu},
          {"format_error_pct", r.format_error_pct}};
}

}  // namespace

EvalResult run_evaluation(const Model& model, const Vocab& vocab,
                          const std::vector<Source>& sources, const EvalOptions& options) {
  std::vector<SourceScratch> scratch(sources.size());
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(sources.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      scratch[i] = evaluate_source(model, vocab, sources[i], options);
    }
  } else {
    // Frozen weights are shared read-only; results land by index, so the
    // merged report does not depend on scheduling.
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex mu;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= sources.size()) return;
            i = next++;
          }
          scratch[i] = evaluate_source(model, vocab, sources[i], options);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  EvalResult result;
  std::vector<std::string> all_hyps;
  std::vector<std::vector<std::string>> all_refs;
  double all_rouge = 0.0;
  int all_d2t = 0;
  PrfAccumulator all_prf;
  SembleuAccumulator all_sembleu;
  int all_t2d = 0, all_errors = 0;
  std::vector<double> sb_seeds, d1_seeds, d2_seeds, bl_seeds;

  for (std::size_t i = 0; i < sources.size(); ++i) {
    const SourceScratch& s = scratch[i];
    SourceEval se;
    se.source = sources[i].name;
    se.n_d2t_examples = static_cast<int>(s.d2t_hyps.size());
    se.n_t2d_examples = s.t2d_total;
    if (!s.d2t_hyps.empty()) {
      se.report.bleu = bleu(s.d2t_hyps, s.d2t_refs);
      se.report.rouge_l = s.rouge_sum / static_cast<double>(s.d2t_hyps.size());
    }
    se.report.entity = s.prf.entity();
    se.report.relation = s.prf.relation();
    se.report.sembleu = s.sembleu.score();
    se.report.format_error_pct =
        s.t2d_total ? 100.0 * s.t2d_errors / static_cast<double>(s.t2d_total) : 0.0;
    if (!s.self_bleu_by_seed.empty()) {
      double ci;
      mean_ci(s.self_bleu_by_seed, &se.report.self_bleu, &ci);
      mean_ci(s.d1_by_seed, &se.report.distinct1, &ci);
      mean_ci(s.d2_by_seed, &se.report.distinct2, &ci);
    }
    result.per_source.push_back(std::move(se));

    all_hyps.insert(all_hyps.end(), s.d2t_hyps.begin(), s.d2t_hyps.end());
    all_refs.insert(all_refs.end(), s.d2t_refs.begin(), s.d2t_refs.end());
    all_rouge += s.rouge_sum;
    all_d2t += static_cast<int>(s.d2t_hyps.size());
    all_t2d += s.t2d_total;
    all_errors += s.t2d_errors;
    all_prf.merge(s.prf);
    all_sembleu.merge(s.sembleu);
    if (s.self_bleu_by_seed.size() == static_cast<std::size_t>(options.diversity_seeds)) {
      if (sb_seeds.empty()) {
        sb_seeds.assign(s.self_bleu_by_seed.begin(), s.self_bleu_by_seed.end());
        d1_seeds.assign(s.d1_by_seed.begin(), s.d1_by_seed.end());
        d2_seeds.assign(s.d2_by_seed.begin(), s.d2_by_seed.end());
        bl_seeds.assign(s.bleu_by_seed.begin(), s.bleu_by_seed.end());
      } else {
        for (std::size_t k = 0; k < sb_seeds.size(); ++k) {
          sb_seeds[k] += s.self_bleu_by_seed[k];
          d1_seeds[k] += s.d1_by_seed[k];
          d2_seeds[k] += s.d2_by_seed[k];
          bl_seeds[k] += s.bleu_by_seed[k];
        }
      }
    }
  }

  result.n_t2d_examples = all_t2d;
  result.n_format_errors = all_errors;
  if (!all_hyps.empty()) {
    result.aggregate.bleu = bleu(all_hyps, all_refs);
    result.aggregate.rouge_l = all_rouge / static_cast<double>(all_d2t);
  }
  result.aggregate.format_error_pct =
      all_t2d ? 100.0 * all_errors / static_cast<double>(all_t2d) : 0.0;
  result.aggregate.entity = all_prf.entity();
  result.aggregate.relation = all_prf.relation();
  result.aggregate.sembleu = all_sembleu.score();

  if (!sb_seeds.empty()) {
    const double n_src = static_cast<double>(sources.size());
    for (auto& x : sb_seeds) x /= n_src;
    for (auto& x : d1_seeds) x /= n_src;
    for (auto& x : d2_seeds) x /= n_src;
    for (auto& x : bl_seeds) x /= n_src;
    mean_ci(sb_seeds, &result.diversity.self_bleu_mean, &result.diversity.self_bleu_ci);
    mean_ci(d1_seeds, &result.diversity.distinct1_mean, &result.diversity.distinct1_ci);
    mean_ci(d2_seeds, &result.diversity.distinct2_mean, &result.diversity.distinct2_ci);
    mean_ci(bl_seeds, &result.diversity.bleu_mean, &result.diversity.bleu_ci);
    result.aggregate.self_bleu = result.diversity.self_bleu_mean;
    result.aggregate.distinct1 = result.diversity.distinct1_mean;
    result.aggregate.distinct2 = result.diversity.distinct2_mean;
  }
  return result;
}

void write_report_json(const EvalResult& result, const std::string& path) {
  nlohmann::json j;
  j["aggregate"] = report_to_json(result.aggregate);
  j["n_t2d_examples"] = result.n_t2d_examples;
  j["n_format_errors"] = result.n_format_errors;
  j["per_source"] = nlohmann::json::array();
  for (const auto& s : result.per_source) {
    nlohmann::json e = report_to_json(s.report);
    e["source"] = s.source;
    e["n_d2t_examples"] = s.n_d2t_examples;
    e["n_t2d_examples"] = s.n_t2d_examples;
    j["per_source"].push_back(e);
  }
  j["diversity"] = {{"self_bleu_mean", result.diversity.self_bleu_mean},
                    {"self_bleu_ci", result.diversity.self_bleu_ci},
                    {"distinct1_mean", result.diversity.distinct1_mean},
                    {"distinct1_ci", result.diversity.distinct1_ci},
                    {"distinct2_mean", result.diversity.distinct2_mean},
                    {"distinct2_ci", result.diversity.distinct2_ci},
                    {"bleu_mean", result.diversity.bleu_mean},
                    {"bleu_ci", result.diversity.bleu_ci}};
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

void write_report_csv(const EvalResult& result, const std::string& path) {
  std::ofstream out(path);
  out << "source,bleu,rouge_l,self_bleu,distinct1,distinct2,ent_p,ent_r,ent_f1,"
         "rel_p,rel_r,rel_f1,sembleu,format_error_pct\n";
  auto row = [&](const std::string& name, const EvalReport& r) {
    out << name << ',' << r.bleu << ',' << r.rouge_l << ',' << r.self_bleu << ',' << r.distinct1
        << ',' << r.distinct2 << ',' << r.entity.precision << ',' << r.entity.recall << ','
        << r.entity.f1 << ',' << r.relation.precision << ',' << r.relation.recall << ','
        << r.relation.f1 << ',' << r.sembleu << ',' << r.format_error_pct << "\n";
  };
  for (const auto& s : result.per_source) row(s.source, s.report);
  row("aggregate", result.aggregate);
}

}  // namespace dtx
