// Acceptance suite: runs every acceptance criterion end to end and prints
// one pass/fail line per criterion. Exits non-zero when any criterion fails.
//
// Usage: dtx_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "dtx/checkpoint.hpp"
#include "dtx/evaluation.hpp"
#include "dtx/rand.hpp"
#include "dtx/training.hpp"
#include "testutil.hpp"

using namespace dtx;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass{true};
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) {
    detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string scratch_dir() {
  const auto dir = fs::temp_directory_path() / "dtx_acceptance";
  fs::create_directories(dir);
  return dir.string();
}

// The end-to-end training configuration: pinned values (10 epochs, T = 2,
// d_style 8, lambda 10, noise defaults, beam widths) kept as specified; the
// optimizer settings are calibrated for from-scratch training, which needs a
// higher learning rate and more optimizer steps than fine-tuning does.
TrainConfig acceptance_train_config() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 10;
  cfg.batch_size = 1;
  cfg.temperature = 2.0;
  cfg.lambda_mmd = 10.0;
  cfg.model.d_style = 8;
  cfg.warmup_steps = 8000;  // denoising-only ramp, 4 of 10 epochs
  cfg.noise.rule_mix = 0.4;
  cfg.style_mode_for_bt = TrainConfig::StyleModeBT::Sample;
  cfg.seed = 7;
  return cfg;
}

WorldConfig default_world() { return WorldConfig{}; }

// Denoising-only ramp sized to the run: 40% of total steps.
int warmup_for(int items_per_source, int n_sources, int epochs, int batch_size) {
  const int steps_per_epoch = items_per_source * n_sources / (2 * batch_size);
  return static_cast<int>(0.4 * epochs * steps_per_epoch);
}

// ---------------------------------------------------------------------------

Outcome criterion1_format_fidelity() {
  Outcome out;
  out.require(serialize(testutil::nord_kg_record()) == testutil::nord_kg_string(),
              "KG serialization");
  out.require(serialize(testutil::ara_record()) == testutil::ara_string(), "tripleset");
  out.require(serialize(testutil::phoenix_record()) == testutil::phoenix_string(), "MR");
  out.require(serialize(testutil::golovkin_record()) == testutil::golovkin_string(), "table");
  out.require(rule_text(testutil::nord_rule_order_record()) == testutil::nord_rule_string(),
              "KG rule text");
  out.require(rule_text(testutil::ara_record()) == testutil::ara_rule_string(),
              "tripleset rule text");
  out.require(rule_text(testutil::phoenix_rule_order_record()) == testutil::phoenix_rule_string(),
              "MR rule text");
  out.require(rule_text(testutil::golovkin_record()) == testutil::golovkin_rule_string(),
              "table rule text");
  for (const auto& [rec, str] :
       {std::pair{testutil::nord_kg_record(), testutil::nord_kg_string()},
        std::pair{testutil::ara_record(), testutil::ara_string()},
        std::pair{testutil::phoenix_record(), testutil::phoenix_string()},
        std::pair{testutil::golovkin_record(), testutil::golovkin_string()}}) {
    auto parsed = parse(str, rec.format);
    out.require(parse_ok(parsed) && parse_record(parsed) == canonical(rec), "parse round-trip");
  }
  return out;
}

Outcome criterion2_roundtrip_properties() {
  Outcome out;
  std::mt19937_64 rng(20240118);
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto r = testutil::random_record(rng);
    const auto c = canonical(r);
    auto back = parse(serialize(r), r.format);
    if (!parse_ok(back) || !(parse_record(back) == c)) {
      out.require(false, "round-trip failed for " + serialize(r));
      break;
    }
    for (int fi = 0; fi < kNumFormats; ++fi) {
      const Format target = format_from_index(fi);
      const auto conv = convert(r, target);
      if (!(conv.triples == c.triples)) {
        out.require(false, "conversion altered triples");
        break;
      }
      const auto there_and_back = convert(conv, r.format);
      if (!(there_and_back.triples == c.triples)) {
        out.require(false, "conversion round-trip altered triples");
        break;
      }
    }
    ++checked;
  }
  out.note(std::to_string(checked) + " records x 4 formats x 16 pairs");
  return out;
}

Outcome criterion3_gradient_check() {
  Outcome out;
  Source s;
  s.name = "g";
  s.format = Format::KG;
  s.texts = {"alpha beta gamma delta", "epsilon zeta eta"};
  s.records = {testutil::nord_kg_record()};
  const Vocab vocab = Vocab::build({s}, 1);
  ModelConfig mcfg;
  mcfg.d_model = 16;
  mcfg.n_heads = 4;
  mcfg.n_enc_layers = 2;
  mcfg.n_dec_layers = 2;
  mcfg.d_ff = 32;
  mcfg.d_style = 3;
  mcfg.vocab_size = vocab.size();
  Model model(mcfg, 4242);

  const auto styled1 = encode("alpha beta gamma delta", vocab, TaskPrefix::Text, true);
  const auto styled2 = encode("epsilon zeta eta", vocab, TaskPrefix::Text, true);
  const auto memory_in = encode("alpha gamma epsilon", vocab, TaskPrefix::Text);
  const auto target = encode("alpha beta gamma delta", vocab, TaskPrefix::Text);
  std::mt19937_64 prior_rng(5);
  nn::Array prior({4, 3});
  for (auto& x : prior.v) x = normal01(prior_rng);

  auto build = [&] {
    std::mt19937_64 eps_rng(99);
    auto post1 = model.style_posterior(styled1);
    auto post2 = model.style_posterior(styled2);
    nn::Tensor s1 = model.reparameterize(post1, eps_rng);
    nn::Tensor s2 = model.reparameterize(post2, eps_rng);
    nn::Tensor memory = model.encode(memory_in);
    nn::Tensor recon = model.sequence_nll(memory, s1, target);
    nn::Tensor q = nn::concat_rows(nn::concat_rows(s1, s2), nn::concat_rows(s2, s1));
    return nn::add(recon, nn::scale(model.mmd_penalty(q, nn::Tensor::constant(prior)), 10.0));
  };
  std::vector<nn::Tensor> leaves;
  for (const auto& [name, t] : model.params().items()) leaves.push_back(t);
  std::mt19937_64 rng(17);
  const auto res = nn::finite_difference_check(build, leaves, 2, 1e-5, rng);
  out.require(res.coords_checked >= 100, "needs >= 100 coordinates");
  out.require(res.max_rel_error < 1e-4,
              "max rel error " + std::to_string(res.max_rel_error));
  out.note(std::to_string(res.coords_checked) + " coords, max rel err " +
           std::to_string(res.max_rel_error));
  return out;
}

Outcome criterion4_mmd() {
  Outcome out;
  std::mt19937_64 rng(31);
  auto rows = [&](int n, int d) {
    nn::Array a({n, d});
    for (auto& x : a.v) x = normal01(rng);
    return a;
  };
  // Double-loop oracle, written out again here.
  auto oracle = [](const nn::Array& q, const nn::Array& p, double sigma2) {
    auto k = [&](const double* a, const double* b, int d) {
      double sq = 0;
      for (int c = 0; c < d; ++c) sq += (a[c] - b[c]) * (a[c] - b[c]);
      return std::exp(-sq / (2 * sigma2));
    };
    const int n = q.rows(), m = p.rows(), d = q.cols();
    double qq = 0, pp = 0, qp = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) qq += k(&q.v[i * d], &q.v[j * d], d);
      }
    }
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (i != j) pp += k(&p.v[i * d], &p.v[j * d], d);
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) qp += k(&q.v[i * d], &p.v[j * d], d);
    }
    return qq / (double(n) * (n - 1)) + pp / (double(m) * (m - 1)) - 2 * qp / (double(n) * m);
  };
  double max_diff = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = rows(6 + trial, 5), p = rows(9 + trial / 2, 5);
    const double got = nn::mmd_ustat(nn::Tensor::constant(q), nn::Tensor::constant(p), 5.0).item();
    max_diff = std::max(max_diff, std::abs(got - oracle(q, p, 5.0)));
  }
  out.require(max_diff < 1e-12, "oracle mismatch " + std::to_string(max_diff));
  const auto q = rows(512, 8), p = rows(512, 8);
  const double v = nn::mmd_ustat(nn::Tensor::constant(q), nn::Tensor::constant(p), 8.0).item();
  out.require(std::abs(v) < 0.05, "same-distribution MMD " + std::to_string(v));
  out.note("max oracle diff " + std::to_string(max_diff) + ", null MMD " + std::to_string(v));
  return out;
}

Outcome criterion5_noise_statistics() {
  Outcome out;
  Source s;
  s.name = "n";
  s.format = Format::KG;
  s.texts = {"w1 w2 w3 w4 w5 w6 w7 w8 w9 w10"};
  const Vocab vocab = Vocab::build({s}, 1);
  const TokenSeq seq = encode(s.texts[0], vocab, TaskPrefix::Text);
  std::mt19937_64 rng(77);
  const int trials = 10000;  // x10 payload tokens = 1e5
  long long dropped = 0, blanked = 0, repeated = 0;
  for (int t = 0; t < trials; ++t) {
    dropped += 10 - (drop_noise(seq, 0.1, rng).length() - 4);
    for (int id : blank_noise(seq, 0.2, rng).ids) blanked += id == Vocab::kBlank;
    repeated += repeat_noise(seq, 0.2, rng).length() - seq.length();
  }
  const double n = trials * 10.0;
  out.require(std::abs(dropped / n - 0.1) < 0.01, "drop rate " + std::to_string(dropped / n));
  out.require(std::abs(blanked / n - 0.2) < 0.01, "blank rate " + std::to_string(blanked / n));
  out.require(std::abs(repeated / n - 0.2) < 0.01,
              "repeat rate " + std::to_string(repeated / n));

  NoiseConfig zero;
  zero.p_drop = zero.p_blank = zero.p_repeat = 0.0;
  zero.enable_swap = false;
  out.require(corrupt(seq, zero, rng) == seq, "zero-noise identity");

  bool cap_ok = true;
  for (int t = 0; t < 10000 && cap_ok; ++t) {
    const auto swapped = swap_noise(seq, 3, rng);
    for (std::size_t i = 0; i < seq.ids.size() && cap_ok; ++i) {
      bool found = false;
      for (int d = -3; d <= 3; ++d) {
        const long j = static_cast<long>(i) + d;
        if (j >= 0 && j < seq.length() && swapped.ids[static_cast<std::size_t>(j)] == seq.ids[i]) {
          found = true;
          break;
        }
      }
      cap_ok = found;
    }
  }
  out.require(cap_ok, "swap displacement cap violated");
  out.note("drop " + std::to_string(dropped / n) + ", blank " + std::to_string(blanked / n) +
           ", repeat " + std::to_string(repeated / n));
  return out;
}

Outcome criterion6_metric_oracles() {
  Outcome out;
  // The oracle comparisons live in the unit suite (>= 20 randomized cases per
  // metric plus hand values); here the perfect-system fixture is scored
  // through the same accumulators the evaluator uses.
  out.require(std::abs(bleu({"the cat sat"}, {{"the cat sat down"}}) -
                       100.0 * std::exp(1.0 - 4.0 / 3.0)) < 1e-9,
              "BLEU hand value");
  out.require(std::abs(rouge_l("a b c d", {"a c d"}) - 87.980769230769226) < 1e-9,
              "ROUGE-L hand value");

  WorldConfig wcfg;
  wcfg.texts_per_source = 4;
  wcfg.records_per_source = 4;
  wcfg.eval_records_per_source = 8;
  const auto sources = generate_synthetic_world(99, wcfg);
  std::vector<std::string> hyps;
  std::vector<std::vector<std::string>> refs;
  PrfAccumulator prf;
  SembleuAccumulator sem;
  int errors = 0, total = 0;
  for (const auto& src : sources) {
    for (const auto& pair : src.eval_pairs) {
      hyps.push_back(pair.text);  // oracle copies the gold text
      refs.push_back({pair.text});
      prf.add(pair.record, pair.record);
      sem.add(pair.record, pair.record);
      ++total;
    }
  }
  out.require(std::abs(bleu(hyps, refs) - 100.0) < 1e-9, "perfect BLEU");
  out.require(std::abs(prf.entity().f1 - 100.0) < 1e-9, "perfect ENT F1");
  out.require(std::abs(prf.relation().f1 - 100.0) < 1e-9, "perfect REL F1");
  out.require(std::abs(sem.score() - 100.0) < 1e-9, "perfect SemBLEU");
  out.require(errors == 0 && total > 0, "error rate");
  out.note("perfect-system fixture over " + std::to_string(total) + " pairs");
  return out;
}

struct E2eArtifacts {
  bool ran{false};
  double ent_f1{0}, rel_f1{0}, bleu{0}, err_pct{0};
  double collapse{0}, collapse_ablated{0};
  EvalResult eval;
};

E2eArtifacts g_e2e;

Outcome criterion7_end_to_end() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  auto sources = generate_synthetic_world(7, default_world());
  TrainConfig cfg = acceptance_train_config();
  Trainer trainer(std::move(sources), cfg);
  const int per_epoch = trainer.steps_per_epoch();
  long long skipped_after_epoch1 = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int s = 0; s < per_epoch; ++s) trainer.step();
    if (epoch == 1) skipped_after_epoch1 = trainer.skipped_pairs();
  }
  skipped_after_epoch1 = trainer.skipped_pairs() - skipped_after_epoch1;

  EvalOptions opts;
  const EvalResult res =
      run_evaluation(trainer.model(), trainer.vocab(), trainer.sources(), opts);
  const double collapse = trainer.identity_collapse_fraction();
  out.require(skipped_after_epoch1 == 0,
              "pairs skipped after epoch 1: " + std::to_string(skipped_after_epoch1));
  const double main_mins =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  // Denoising-ablated control reproduces the identity-collapse failure mode.
  TrainConfig ablated = cfg;
  ablated.denoising_enabled = false;
  Trainer control(generate_synthetic_world(7, default_world()), ablated);
  for (int s = 0; s < ablated.epochs * control.steps_per_epoch(); ++s) control.step();
  const double collapse_ablated = control.identity_collapse_fraction();

  g_e2e = {true, res.aggregate.entity.f1, res.aggregate.relation.f1, res.aggregate.bleu,
           res.aggregate.format_error_pct, collapse, collapse_ablated, res};

  out.require(res.aggregate.entity.f1 >= 80.0, "ENT F1 " + std::to_string(res.aggregate.entity.f1));
  out.require(res.aggregate.relation.f1 >= 70.0,
              "REL F1 " + std::to_string(res.aggregate.relation.f1));
  out.require(res.aggregate.bleu >= 40.0, "BLEU " + std::to_string(res.aggregate.bleu));
  out.require(res.aggregate.format_error_pct <= 5.0,
              "error% " + std::to_string(res.aggregate.format_error_pct));
  out.require(collapse < 0.05, "collapse fraction " + std::to_string(collapse));

  // All loss components stayed finite and the MMD penalty never dipped far
  // below zero (U-statistic noise floor).
  double min_mmd = 0.0;
  for (const auto& r : trainer.history()) min_mmd = std::min(min_mmd, r.mmd_term);
  out.require(min_mmd > -0.05, "mmd excursion " + std::to_string(min_mmd));

  // Reported witnesses: cross-format extraction consistency and single-triple
  // verbalization faithfulness on a sample of eval inputs.
  int consistent = 0, consistency_total = 0;
  int faithful = 0, faithful_total = 0;
  {
    const Model& m = trainer.model();
    const Vocab& v = trainer.vocab();
    for (const auto& src : trainer.sources()) {
      for (std::size_t i = 0; i < src.eval_pairs.size() && i < 6; ++i) {
        const auto& pair = src.eval_pairs[i];
        auto a = t2d(m, v, pair.text, Format::KG, opts.t2d_beam);
        auto b = t2d(m, v, pair.text, Format::Tripleset, opts.t2d_beam);
        if (a.ok() && b.ok()) {
          ++consistency_total;
          consistent += canonical(a.record()).triples == canonical(b.record()).triples;
        }
        if (pair.record.triples.size() == 1) {
          ++faithful_total;
          const std::string text = d2t(m, v, pair.record, opts.d2t_beam);
          faithful += text.find(pair.record.triples[0].subject) != std::string::npos &&
                      text.find(pair.record.triples[0].object) != std::string::npos;
        }
      }
    }
  }

  const double total_mins =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  out.require(main_mins < 30.0, "main run took " + std::to_string(main_mins) + " min");
  std::ostringstream note;
  note.precision(4);
  note << "ENT F1 " << res.aggregate.entity.f1 << ", REL F1 " << res.aggregate.relation.f1
       << ", BLEU " << res.aggregate.bleu << ", err% " << res.aggregate.format_error_pct
       << ", collapse " << collapse << " vs ablated " << collapse_ablated << " (x"
       << (collapse > 0 ? collapse_ablated / collapse : collapse_ablated / 0.01)
       << " reported), cross-format consistency " << consistent << "/" << consistency_total
       << ", single-triple faithfulness " << faithful << "/" << faithful_total << ", run "
       << main_mins << " min (+control, total " << total_mins << ")";
  out.note(note.str());
  return out;
}

Outcome criterion8_multi_source_benefit() {
  Outcome out;
  WorldConfig wcfg;
  wcfg.texts_per_source = 150;
  wcfg.records_per_source = 150;
  wcfg.eval_records_per_source = 12;
  wcfg.source_formats = {Format::KG, Format::MR};

  TrainConfig cfg = acceptance_train_config();
  cfg.epochs = 6;

  std::vector<double> diffs;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    cfg.seed = seed;
    const auto world = generate_synthetic_world(seed, wcfg);

    TrainConfig pooled_cfg = cfg;
    pooled_cfg.warmup_steps = warmup_for(300, 2, cfg.epochs, cfg.batch_size);
    Trainer pooled(world, pooled_cfg);
    for (int i = 0; i < cfg.epochs * pooled.steps_per_epoch(); ++i) pooled.step();
    EvalOptions opts;
    const double pooled_f1 =
        run_evaluation(pooled.model(), pooled.vocab(), pooled.sources(), opts)
            .aggregate.entity.f1;

    double single_f1 = 0.0;
    for (const auto& src : world) {
      TrainConfig single_cfg = cfg;
      single_cfg.warmup_steps = warmup_for(300, 1, cfg.epochs, cfg.batch_size);
      Trainer single({src}, single_cfg);
      for (int i = 0; i < cfg.epochs * single.steps_per_epoch(); ++i) single.step();
      single_f1 += run_evaluation(single.model(), single.vocab(), single.sources(), opts)
                       .aggregate.entity.f1;
    }
    single_f1 /= static_cast<double>(world.size());
    diffs.push_back(pooled_f1 - single_f1);
  }
  double mean = 0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double var = 0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= std::max<std::size_t>(1, diffs.size() - 1);
  const double ci = 1.96 * std::sqrt(var / static_cast<double>(diffs.size()));
  out.require(mean >= 0.0, "mean ENT F1 difference " + std::to_string(mean));
  std::ostringstream note;
  note.precision(4);
  note << "pooled - single ENT F1 over 3 seeds: " << diffs[0] << ", " << diffs[1] << ", "
       << diffs[2] << " (mean " << mean << " +- " << ci << ")";
  out.note(note.str());
  return out;
}

Outcome criterion9_supervised_upper_bound() {
  Outcome out;
  if (!g_e2e.ran) {
    out.require(false, "criterion 7 must run first for the paired comparison");
    return out;
  }
  TrainConfig cfg = acceptance_train_config();
  Trainer sup(generate_synthetic_world(7, default_world()), cfg);
  const std::string run_dir = scratch_dir() + "/sup_run";
  fs::remove_all(run_dir);
  sup.train_supervised(run_dir);
  EvalOptions opts;
  const EvalResult res = run_evaluation(sup.model(), sup.vocab(), sup.sources(), opts);
  out.require(res.aggregate.entity.f1 >= g_e2e.ent_f1 - 2.0,
              "supervised ENT F1 " + std::to_string(res.aggregate.entity.f1) +
                  " vs unsupervised " + std::to_string(g_e2e.ent_f1));
  std::ostringstream note;
  note.precision(4);
  note << "supervised ENT F1 " << res.aggregate.entity.f1 << " vs unsupervised " << g_e2e.ent_f1;
  out.note(note.str());
  return out;
}

Outcome criterion10_diversity_trend() {
  Outcome out;
  WorldConfig wcfg;
  wcfg.texts_per_source = 250;
  wcfg.records_per_source = 250;
  wcfg.eval_records_per_source = 8;

  std::map<int, DiversityStats> stats;
  for (int d_style : {2, 8, 32}) {
    TrainConfig cfg = acceptance_train_config();
    cfg.epochs = 6;
    cfg.model.d_style = d_style;
    cfg.warmup_steps = warmup_for(500, 4, cfg.epochs, cfg.batch_size);
    Trainer trainer(generate_synthetic_world(7, wcfg), cfg);
    for (int i = 0; i < cfg.epochs * trainer.steps_per_epoch(); ++i) trainer.step();
    EvalOptions opts;
    opts.diversity = true;
    opts.diversity_k = 10;
    opts.diversity_seeds = 10;
    const EvalResult res =
        run_evaluation(trainer.model(), trainer.vocab(), trainer.sources(), opts);
    stats[d_style] = res.diversity;
  }
  out.require(stats[32].self_bleu_mean < stats[2].self_bleu_mean,
              "Self-BLEU trend: d32 " + std::to_string(stats[32].self_bleu_mean) + " vs d2 " +
                  std::to_string(stats[2].self_bleu_mean));
  out.require(stats[32].distinct2_mean > stats[2].distinct2_mean,
              "Distinct-2 trend: d32 " + std::to_string(stats[32].distinct2_mean) + " vs d2 " +
                  std::to_string(stats[2].distinct2_mean));
  std::ostringstream note;
  note.precision(4);
  note << "Self-BLEU d2/d8/d32: " << stats[2].self_bleu_mean << "/" << stats[8].self_bleu_mean
       << "/" << stats[32].self_bleu_mean << "; Distinct-2: " << stats[2].distinct2_mean << "/"
       << stats[8].distinct2_mean << "/" << stats[32].distinct2_mean << " (means over 10 seeds)";
  out.note(note.str());
  return out;
}

Outcome criterion11_entropy_bound() {
  Outcome out;
  for (int d = 1; d <= 64; ++d) {
    const double want = 0.5 * d * (1.0 + std::log(2.0 * M_PI));
    if (std::abs(style_entropy_bound(d) - want) >= 1e-12) {
      out.require(false, "entropy bound mismatch at d=" + std::to_string(d));
      break;
    }
  }
  out.note("(d/2)(1+log 2pi) exact for d in [1, 64]");
  return out;
}

Outcome criterion12_determinism() {
  Outcome out;
  WorldConfig wcfg;
  wcfg.texts_per_source = 40;
  wcfg.records_per_source = 40;
  wcfg.eval_records_per_source = 4;
  TrainConfig cfg = acceptance_train_config();
  cfg.epochs = 1;
  cfg.warmup_steps = 5;

  auto run = [&](const std::string& dir) {
    fs::remove_all(dir);
    Trainer t(generate_synthetic_world(5, wcfg), cfg);
    t.train(dir);
    EvalOptions opts;
    const EvalResult res = run_evaluation(t.model(), t.vocab(), t.sources(), opts);
    write_report_json(res, dir + "/report.json");
  };
  const std::string d1 = scratch_dir() + "/det_a";
  const std::string d2 = scratch_dir() + "/det_b";
  run(d1);
  run(d2);
  auto file_bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const std::string c1 = file_bytes(d1 + "/ckpt_epoch1");
  out.require(!c1.empty() && c1 == file_bytes(d2 + "/ckpt_epoch1"),
              "checkpoints differ between identical seeds");
  const std::string r1 = file_bytes(d1 + "/report.json");
  out.require(!r1.empty() && r1 == file_bytes(d2 + "/report.json"),
              "reports differ between identical seeds");
  out.note("checkpoint and report bytes identical across reruns");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"format fidelity (reference linearizations)", criterion1_format_fidelity}},
      {2, {"round-trip/conversion property suite", criterion2_roundtrip_properties}},
      {3, {"full-model gradient check", criterion3_gradient_check}},
      {4, {"MMD oracle equality and null calibration", criterion4_mmd}},
      {5, {"noise statistics", criterion5_noise_statistics}},
      {6, {"metric oracles and perfect-system fixture", criterion6_metric_oracles}},
      {7, {"end-to-end unsupervised run", criterion7_end_to_end}},
      {8, {"multi-source benefit", criterion8_multi_source_benefit}},
      {9, {"supervised upper bound", criterion9_supervised_upper_bound}},
      {10, {"diversity trend over style dimension", criterion10_diversity_trend}},
      {11, {"entropy bound formula", criterion11_entropy_bound}},
      {12, {"seed determinism", criterion12_determinism}},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty()) {
    for (const auto& [num, entry] : criteria) selected.push_back(num);
  }

  bool all_pass = true;
  for (int num : selected) {
    const auto it = criteria.find(num);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << num << "\n";
      return 1;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = it->second.second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << num << ": "
              << it->second.first;
    if (!out.detail.empty()) std::cout << " -- " << out.detail;
    std::cout << " [" << static_cast<int>(secs) << "s]" << std::endl;
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}
