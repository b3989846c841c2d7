// dtx -- command line front end: corpus generation, training, inference,
// conversion, noise preview and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dtx/evaluation.hpp"
#include "dtx/rand.hpp"
#include "dtx/training.hpp"

namespace fs = std::filesystem;
using namespace dtx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<std::string> read_lines(const std::string& path) {
  std::istream* in = &std::cin;
  std::ifstream file;
  if (path != "-") {
    file.open(path);
    if (!file) throw std::runtime_error("cannot open " + path);
    in = &file;
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(*in, line)) lines.push_back(line);
  return lines;
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path == "-") return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot open " + path);
  return file;
}

std::vector<Format> parse_format_list(const std::string& csv) {
  std::vector<Format> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(format_from_name(item));
  return out;
}

// --- train config plumbing: CLI flag > config file > built-in default -------

struct TrainFlags {
  std::optional<double> learning_rate, temperature, lambda_mmd, weight_decay;
  std::optional<double> p_drop, p_blank, p_repeat, rule_mix;
  std::optional<int> epochs, batch_size, warmup_steps, swap_window;
  std::optional<int> d_model, n_heads, n_enc_layers, n_dec_layers, d_ff, d_style, max_len;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> style_mode;
  std::optional<bool> denoising;
};

void add_train_flags(CLI::App* cmd, TrainFlags* f) {
  cmd->add_option("--lr", f->learning_rate, "learning rate");
  cmd->add_option("--epochs", f->epochs, "training epochs");
  cmd->add_option("--batch-size", f->batch_size, "items per modality per batch");
  cmd->add_option("--temperature", f->temperature, "source mixing temperature (default 2.0)");
  cmd->add_option("--lambda-mmd", f->lambda_mmd, "MMD coefficient");
  cmd->add_option("--weight-decay", f->weight_decay, "decoupled weight decay");
  cmd->add_option("--warmup-steps", f->warmup_steps, "denoising-only steps at start");
  cmd->add_option("--seed", f->seed, "run seed");
  cmd->add_option("--p-drop", f->p_drop, "drop noise probability");
  cmd->add_option("--p-blank", f->p_blank, "blank noise probability");
  cmd->add_option("--p-repeat", f->p_repeat, "repeat noise probability");
  cmd->add_option("--swap-window", f->swap_window, "swap noise window");
  cmd->add_option("--rule-mix", f->rule_mix, "rule-pair share of denoising batches");
  cmd->add_option("--style-mode", f->style_mode, "back-translation style: zero|sample")
      ->check(CLI::IsMember({"zero", "sample"}));
  cmd->add_flag("--no-denoising{false}", f->denoising, "ablate the denoising objective");
  cmd->add_option("--d-model", f->d_model, "model width");
  cmd->add_option("--n-heads", f->n_heads, "attention heads");
  cmd->add_option("--enc-layers", f->n_enc_layers, "encoder layers");
  cmd->add_option("--dec-layers", f->n_dec_layers, "decoder layers");
  cmd->add_option("--d-ff", f->d_ff, "feed-forward width");
  cmd->add_option("--d-style", f->d_style, "style latent dimension");
  cmd->add_option("--max-len", f->max_len, "maximum sequence length");
}

void apply_json_config(const nlohmann::json& j, TrainConfig* cfg) {
  const auto t = j.value("train", nlohmann::json::object());
  if (t.contains("learning_rate")) cfg->learning_rate = t["learning_rate"].get<double>();
  if (t.contains("epochs")) cfg->epochs = t["epochs"].get<int>();
  if (t.contains("batch_size")) cfg->batch_size = t["batch_size"].get<int>();
  if (t.contains("temperature")) cfg->temperature = t["temperature"].get<double>();
  if (t.contains("lambda_mmd")) cfg->lambda_mmd = t["lambda_mmd"].get<double>();
  if (t.contains("weight_decay")) cfg->weight_decay = t["weight_decay"].get<double>();
  if (t.contains("warmup_steps")) cfg->warmup_steps = t["warmup_steps"].get<int>();
  if (t.contains("seed")) cfg->seed = t["seed"].get<std::uint64_t>();
  if (t.contains("denoising_enabled")) cfg->denoising_enabled = t["denoising_enabled"].get<bool>();
  if (t.contains("style_mode_for_bt")) {
    cfg->style_mode_for_bt = t["style_mode_for_bt"].get<std::string>() == "sample"
                                 ? TrainConfig::StyleModeBT::Sample
                                 : TrainConfig::StyleModeBT::Zero;
  }
  if (t.contains("noise")) {
    const auto& n = t["noise"];
    if (n.contains("p_drop")) cfg->noise.p_drop = n["p_drop"].get<double>();
    if (n.contains("p_blank")) cfg->noise.p_blank = n["p_blank"].get<double>();
    if (n.contains("p_repeat")) cfg->noise.p_repeat = n["p_repeat"].get<double>();
    if (n.contains("swap_window")) cfg->noise.swap_window = n["swap_window"].get<int>();
    if (n.contains("rule_mix")) cfg->noise.rule_mix = n["rule_mix"].get<double>();
  }
  const auto m = j.value("model", nlohmann::json::object());
  if (m.contains("d_model")) cfg->model.d_model = m["d_model"].get<int>();
  if (m.contains("n_heads")) cfg->model.n_heads = m["n_heads"].get<int>();
  if (m.contains("n_enc_layers")) cfg->model.n_enc_layers = m["n_enc_layers"].get<int>();
  if (m.contains("n_dec_layers")) cfg->model.n_dec_layers = m["n_dec_layers"].get<int>();
  if (m.contains("d_ff")) cfg->model.d_ff = m["d_ff"].get<int>();
  if (m.contains("d_style")) cfg->model.d_style = m["d_style"].get<int>();
  if (m.contains("max_len")) cfg->model.max_len = m["max_len"].get<int>();
}

TrainConfig resolve_train_config(const TrainFlags& f, const std::string& config_path) {
  TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    nlohmann::json j;
    in >> j;
    apply_json_config(j, &cfg);
  }
  if (f.learning_rate) cfg.learning_rate = *f.learning_rate;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.temperature) cfg.temperature = *f.temperature;
  if (f.lambda_mmd) cfg.lambda_mmd = *f.lambda_mmd;
  if (f.weight_decay) cfg.weight_decay = *f.weight_decay;
  if (f.warmup_steps) cfg.warmup_steps = *f.warmup_steps;
  if (f.seed) cfg.seed = *f.seed;
  if (f.p_drop) cfg.noise.p_drop = *f.p_drop;
  if (f.p_blank) cfg.noise.p_blank = *f.p_blank;
  if (f.p_repeat) cfg.noise.p_repeat = *f.p_repeat;
  if (f.swap_window) cfg.noise.swap_window = *f.swap_window;
  if (f.rule_mix) cfg.noise.rule_mix = *f.rule_mix;
  if (f.style_mode) {
    cfg.style_mode_for_bt = *f.style_mode == "sample" ? TrainConfig::StyleModeBT::Sample
                                                      : TrainConfig::StyleModeBT::Zero;
  }
  if (f.denoising) cfg.denoising_enabled = *f.denoising;
  if (f.d_model) cfg.model.d_model = *f.d_model;
  if (f.n_heads) cfg.model.n_heads = *f.n_heads;
  if (f.n_enc_layers) cfg.model.n_enc_layers = *f.n_enc_layers;
  if (f.n_dec_layers) cfg.model.n_dec_layers = *f.n_dec_layers;
  if (f.d_ff) cfg.model.d_ff = *f.d_ff;
  if (f.d_style) cfg.model.d_style = *f.d_style;
  if (f.max_len) cfg.model.max_len = *f.max_len;
  return cfg;
}

void report_config(const TrainConfig& cfg) {
  std::cout << "config: lr=" << cfg.learning_rate << " epochs=" << cfg.epochs
            << " batch=" << cfg.batch_size << " T=" << cfg.temperature
            << " lambda_mmd=" << cfg.lambda_mmd << " d_model=" << cfg.model.d_model
            << " d_style=" << cfg.model.d_style << " seed=" << cfg.seed
            << " warmup=" << cfg.warmup_steps
            << " denoising=" << (cfg.denoising_enabled ? "on" : "off") << "\n";
}

int run_train(const std::string& corpus_dir, const std::string& out_dir, TrainConfig cfg,
              bool supervised) {
  auto sources = load_corpus(corpus_dir);
  report_config(cfg);
  Trainer trainer(std::move(sources), cfg);
  std::cout << "vocab=" << trainer.vocab().size()
            << " params=" << trainer.model().params().total_parameters()
            << " steps/epoch=" << trainer.steps_per_epoch() << "\n";
  if (supervised) {
    trainer.train_supervised(out_dir);
  } else {
    trainer.train(out_dir);
  }
  std::cout << "wrote " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-source data-to-text / text-to-data converter"};
  app.require_subcommand(1);

  // gen-corpus -----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  std::uint64_t gen_seed = 7;
  std::string gen_out;
  WorldConfig wcfg;
  std::string gen_formats = "kg,tripleset,mr,totto";
  gen->add_option("--seed", gen_seed, "world seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--entities", wcfg.n_entities, "entity count");
  gen->add_option("--relations", wcfg.n_relations, "relation count");
  gen->add_option("--values", wcfg.values_per_relation, "values per relation");
  gen->add_option("--templates", wcfg.n_templates_per_relation, "templates per relation");
  gen->add_option("--texts", wcfg.texts_per_source, "texts per source");
  gen->add_option("--records", wcfg.records_per_source, "records per source");
  gen->add_option("--eval-records", wcfg.eval_records_per_source, "held-out records per source");
  gen->add_option("--eval-refs", wcfg.eval_refs_per_record, "reference texts per eval record");
  gen->add_option("--max-triples", wcfg.max_triples, "max triples per record");
  gen->add_option("--formats", gen_formats, "comma list of source formats");

  // train / train-supervised ---------------------------------------------
  auto* train = app.add_subcommand("train", "unsupervised cycle training");
  std::string train_corpus, train_out, train_config;
  TrainFlags tf;
  train->add_option("--corpus", train_corpus, "corpus directory")->required();
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--config", train_config, "JSON config file");
  add_train_flags(train, &tf);

  auto* trains = app.add_subcommand("train-supervised", "supervised baseline training");
  std::string sup_corpus, sup_out, sup_config;
  TrainFlags sf;
  trains->add_option("--corpus", sup_corpus, "corpus directory")->required();
  trains->add_option("--out", sup_out, "run directory")->required();
  trains->add_option("--config", sup_config, "JSON config file");
  add_train_flags(trains, &sf);

  // infer ------------------------------------------------------------------
  auto* infer = app.add_subcommand("infer", "run a trained model");
  infer->require_subcommand(1);
  auto* infer_d2t = infer->add_subcommand("d2t", "records to text");
  auto* infer_t2d = infer->add_subcommand("t2d", "text to records");
  std::string inf_ckpt, inf_format = "kg", inf_in = "-", inf_out = "-";
  int inf_diverse = 0;
  std::uint64_t inf_seed = 1;
  int d2t_beams = 5, t2d_beams = 8;
  for (auto* cmd : {infer_d2t, infer_t2d}) {
    cmd->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
    cmd->add_option("--format", inf_format, "structured format")->required();
    cmd->add_option("--in", inf_in, "input file ('-' for stdin)");
    cmd->add_option("--out", inf_out, "output file ('-' for stdout)");
  }
  double d2t_alpha = 0.0, t2d_alpha = 1.0;
  infer_d2t->add_option("--beams", d2t_beams, "beam width (default 5)");
  infer_d2t->add_option("--alpha", d2t_alpha, "length penalty (default 0)");
  infer_d2t->add_option("--diverse", inf_diverse, "emit K style samples per record");
  infer_d2t->add_option("--seed", inf_seed, "sampling seed for --diverse");
  infer_t2d->add_option("--beams", t2d_beams, "beam width (default 8)");
  infer_t2d->add_option("--alpha", t2d_alpha, "length penalty (default 1)");

  // eval --------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a corpus");
  std::string eval_ckpt, eval_corpus, eval_out = ".";
  EvalOptions eopt;
  bool eval_diversity = false;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--corpus", eval_corpus, "corpus directory")->required();
  eval->add_option("--out", eval_out, "output directory for report.json/report.csv");
  eval->add_flag("--diversity", eval_diversity, "also run style-diversity metrics");
  eval->add_option("--k", eopt.diversity_k, "samples per record for diversity");
  eval->add_option("--seeds", eopt.diversity_seeds, "random seeds for diversity");
  eval->add_option("--seed", eopt.seed, "base seed");
  eval->add_option("--jobs", eopt.jobs, "parallel source scoring jobs");
  eval->add_option("--d2t-beams", eopt.d2t_beam.n_beams, "beam width for d2t");
  eval->add_option("--t2d-beams", eopt.t2d_beam.n_beams, "beam width for t2d");
  eval->add_option("--d2t-alpha", eopt.d2t_beam.length_penalty, "length penalty for d2t");
  eval->add_option("--t2d-alpha", eopt.t2d_beam.length_penalty, "length penalty for t2d");

  // eval-sweep ---------------------------------------------------------------
  auto* sweep = app.add_subcommand("eval-sweep", "style-dimension sweep");
  std::string sweep_corpus, sweep_out, sweep_dims = "2,4,8,16,32,64";
  TrainFlags swf;
  EvalOptions sweep_opts;
  sweep_opts.diversity = true;
  sweep->add_option("--corpus", sweep_corpus, "corpus directory")->required();
  sweep->add_option("--out", sweep_out, "sweep output directory")->required();
  sweep->add_option("--style-dims", sweep_dims, "comma list of d_style values");
  sweep->add_option("--k", sweep_opts.diversity_k, "samples per record");
  sweep->add_option("--seeds", sweep_opts.diversity_seeds, "random seeds per model");
  add_train_flags(sweep, &swf);

  // convert -------------------------------------------------------------------
  auto* convert_cmd = app.add_subcommand("convert", "re-serialize records between formats");
  std::string conv_from, conv_to, conv_in = "-", conv_out = "-";
  convert_cmd->add_option("--from", conv_from, "source format")->required();
  convert_cmd->add_option("--to", conv_to, "target format")->required();
  convert_cmd->add_option("--in", conv_in, "input file ('-' for stdin)");
  convert_cmd->add_option("--out", conv_out, "output file ('-' for stdout)");

  // noise-preview ---------------------------------------------------------------
  auto* preview = app.add_subcommand("noise-preview", "show before/after noise pairs");
  std::string pv_fn = "drop", pv_corpus;
  std::uint64_t pv_seed = 1;
  int pv_count = 5;
  preview->add_option("--fn", pv_fn, "swap|drop|blank|repeat|rule")
      ->check(CLI::IsMember({"swap", "drop", "blank", "repeat", "rule"}));
  preview->add_option("--seed", pv_seed, "rng seed");
  preview->add_option("--count", pv_count, "pairs to print");
  preview->add_option("--corpus", pv_corpus, "sample lines from this corpus");

  // gradcheck ----------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  int gc_dmodel = 16, gc_coords = 120;
  std::uint64_t gc_seed = 13;
  gc->add_option("--d-model", gc_dmodel, "probe model width");
  gc->add_option("--coords", gc_coords, "minimum sampled coordinates");
  gc->add_option("--seed", gc_seed, "probe seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      wcfg.source_formats = parse_format_list(gen_formats);
      auto sources = generate_synthetic_world(gen_seed, wcfg);
      save_corpus(sources, gen_out);
      std::size_t texts = 0, records = 0, eval_pairs = 0;
      for (const auto& s : sources) {
        texts += s.texts.size();
        records += s.records.size();
        eval_pairs += s.eval_pairs.size();
      }
      std::cout << "wrote " << sources.size() << " sources (" << texts << " texts, " << records
                << " records, " << eval_pairs << " eval pairs) to " << gen_out << "\n";
      return kExitOk;
    }

    if (*train) return run_train(train_corpus, train_out, resolve_train_config(tf, train_config), false);
    if (*trains) return run_train(sup_corpus, sup_out, resolve_train_config(sf, sup_config), true);

    if (*infer) {
      LoadedModel lm = load_model(inf_ckpt);
      const Format format = format_from_name(inf_format);
      std::ofstream out_file;
      std::ostream& out = open_out(out_file, inf_out);
      const auto lines = read_lines(inf_in);
      if (*infer_d2t) {
        BeamConfig beam{d2t_beams, lm.model.config().max_len, d2t_alpha};
        std::mt19937_64 rng(inf_seed);
        for (const auto& line : lines) {
          auto rec = parse(line, format);
          if (!parse_ok(rec)) {
            std::cerr << "parse error: " << parse_error(rec).reason << "\n";
            return kExitData;
          }
          if (inf_diverse > 0) {
            const auto texts = d2t_diverse(lm.model, lm.vocab, parse_record(rec), inf_diverse,
                                           beam, rng);
            for (std::size_t i = 0; i < texts.size(); ++i) {
              out << texts[i] << (i + 1 < texts.size() ? "\t" : "");
            }
            out << "\n";
          } else {
            out << d2t(lm.model, lm.vocab, parse_record(rec), beam) << "\n";
          }
        }
      } else {
        BeamConfig beam{t2d_beams, lm.model.config().max_len, t2d_alpha};
        for (const auto& line : lines) {
          const T2dResult res = t2d(lm.model, lm.vocab, line, format, beam);
          if (res.ok()) {
            out << serialize(res.record()) << "\n";
          } else {
            out << "#FORMAT_ERROR " << res.raw << "\n";
          }
        }
      }
      return kExitOk;
    }

    if (*eval) {
      LoadedModel lm = load_model(eval_ckpt);
      auto sources = load_corpus(eval_corpus);
      eopt.diversity = eval_diversity;
      eopt.d2t_beam.max_len = lm.model.config().max_len;
      eopt.t2d_beam.max_len = lm.model.config().max_len;
      const EvalResult res = run_evaluation(lm.model, lm.vocab, sources, eopt);
      fs::create_directories(eval_out);
      write_report_json(res, (fs::path(eval_out) / "report.json").string());
      write_report_csv(res, (fs::path(eval_out) / "report.csv").string());
      std::cout << "BLEU " << res.aggregate.bleu << "  ROUGE-L " << res.aggregate.rouge_l
                << "  ENT F1 " << res.aggregate.entity.f1 << "  REL F1 "
                << res.aggregate.relation.f1 << "  SemBLEU " << res.aggregate.sembleu
                << "  error% " << res.aggregate.format_error_pct << "\n";
      if (eopt.diversity) {
        std::cout << "Self-BLEU " << res.diversity.self_bleu_mean << " +- "
                  << res.diversity.self_bleu_ci << "  Distinct-1 "
                  << res.diversity.distinct1_mean << "  Distinct-2 "
                  << res.diversity.distinct2_mean << "\n";
      }
      std::cout << "wrote " << (fs::path(eval_out) / "report.json").string() << "\n";
      return kExitOk;
    }

    if (*sweep) {
      auto sources = load_corpus(sweep_corpus);
      fs::create_directories(sweep_out);
      std::ofstream csv(fs::path(sweep_out) / "sweep.csv");
      csv << "d_style,bleu,self_bleu,self_bleu_ci,distinct1,distinct2,ent_f1,rel_f1\n";
      std::stringstream dims(sweep_dims);
      std::string dim;
      while (std::getline(dims, dim, ',')) {
        TrainConfig cfg = resolve_train_config(swf, "");
        cfg.model.d_style = std::stoi(dim);
        report_config(cfg);
        Trainer trainer(sources, cfg);
        const std::string run_dir = (fs::path(sweep_out) / ("d_style_" + dim)).string();
        trainer.train(run_dir);
        const EvalResult res =
            run_evaluation(trainer.model(), trainer.vocab(), trainer.sources(), sweep_opts);
        write_report_json(res, (fs::path(run_dir) / "report.json").string());
        csv << dim << ',' << res.diversity.bleu_mean << ',' << res.diversity.self_bleu_mean
            << ',' << res.diversity.self_bleu_ci << ',' << res.diversity.distinct1_mean << ','
            << res.diversity.distinct2_mean << ',' << res.aggregate.entity.f1 << ','
            << res.aggregate.relation.f1 << "\n";
        std::cout << "d_style=" << dim << " Self-BLEU=" << res.diversity.self_bleu_mean
                  << " Distinct-2=" << res.diversity.distinct2_mean << "\n";
      }
      std::cout << "wrote " << (fs::path(sweep_out) / "sweep.csv").string() << "\n";
      return kExitOk;
    }

    if (*convert_cmd) {
      const Format from = format_from_name(conv_from);
      const Format to = format_from_name(conv_to);
      std::ofstream out_file;
      std::ostream& out = open_out(out_file, conv_out);
      for (const auto& line : read_lines(conv_in)) {
        if (normalize_ws(line).empty()) continue;
        auto rec = parse(line, from);
        if (!parse_ok(rec)) {
          std::cerr << "parse error at offset " << parse_error(rec).position << ": "
                    << parse_error(rec).reason << "\n";
          return kExitData;
        }
        out << serialize(convert(parse_record(rec), to)) << "\n";
      }
      return kExitOk;
    }

    if (*preview) {
      std::vector<std::string> texts;
      std::vector<StructuredRecord> records;
      if (!pv_corpus.empty()) {
        auto sources = load_corpus(pv_corpus);
        for (const auto& s : sources) {
          for (const auto& t : s.texts) texts.push_back(t);
          for (const auto& r : s.records) records.push_back(r);
        }
      } else {
        WorldConfig small;
        small.texts_per_source = 8;
        small.records_per_source = 8;
        small.eval_records_per_source = 0;
        for (const auto& s : generate_synthetic_world(pv_seed, small)) {
          for (const auto& t : s.texts) texts.push_back(t);
          for (const auto& r : s.records) records.push_back(r);
        }
      }
      std::vector<Source> vocab_sources(1);
      vocab_sources[0].texts = texts;
      vocab_sources[0].records = records;
      const Vocab vocab = Vocab::build(vocab_sources, 1);
      std::mt19937_64 rng(pv_seed);
      for (int i = 0; i < pv_count && i < static_cast<int>(texts.size()); ++i) {
        if (pv_fn == "rule") {
          const auto& record = records[static_cast<std::size_t>(i)];
          auto d2t_pair = rule_noise_data_to_text(record);
          std::cout << "record: " << d2t_pair.first << "\n  text: " << d2t_pair.second << "\n";
          auto t2d_pair = rule_noise_text_to_data(texts[static_cast<std::size_t>(i)],
                                                  record.format, rng);
          if (t2d_pair) {
            std::cout << "  text: " << t2d_pair->first << "\nrecord: " << t2d_pair->second
                      << "\n";
          }
          continue;
        }
        const TokenSeq seq = encode(texts[static_cast<std::size_t>(i)], vocab, TaskPrefix::Text);
        TokenSeq noisy;
        NoiseConfig ncfg;
        if (pv_fn == "swap") noisy = swap_noise(seq, ncfg.swap_window, rng);
        if (pv_fn == "drop") noisy = drop_noise(seq, ncfg.p_drop, rng);
        if (pv_fn == "blank") noisy = blank_noise(seq, ncfg.p_blank, rng);
        if (pv_fn == "repeat") noisy = repeat_noise(seq, ncfg.p_repeat, rng);
        std::cout << " in: " << decode(seq, vocab) << "\nout: " << decode(noisy, vocab) << "\n";
      }
      return kExitOk;
    }

    if (*gc) {
      // Full-model loss (reconstruction + MMD) against central differences.
      WorldConfig small;
      small.texts_per_source = 4;
      small.records_per_source = 4;
      small.eval_records_per_source = 0;
      small.source_formats = {Format::KG};
      auto sources = generate_synthetic_world(gc_seed, small);
      const Vocab vocab = Vocab::build(sources, 1);
      ModelConfig mcfg;
      mcfg.d_model = gc_dmodel;
      mcfg.n_heads = 4;
      mcfg.n_enc_layers = 1;
      mcfg.n_dec_layers = 1;
      mcfg.d_ff = 2 * gc_dmodel;
      mcfg.d_style = 3;
      mcfg.vocab_size = vocab.size();
      Model model(mcfg, gc_seed);

      const auto styled1 = encode(sources[0].texts[0], vocab, TaskPrefix::Text, true);
      const auto styled2 = encode(sources[0].texts[1], vocab, TaskPrefix::Text, true);
      const auto memory_in = encode(serialize(sources[0].records[0]), vocab, TaskPrefix::Text);
      const auto target = encode(sources[0].texts[0], vocab, TaskPrefix::Text);
      std::mt19937_64 prior_rng(gc_seed + 1);
      nn::Array prior({4, 3});
      for (auto& x : prior.v) x = normal01(prior_rng);

      auto build = [&] {
        std::mt19937_64 eps_rng(1234);
        auto post1 = model.style_posterior(styled1);
        auto post2 = model.style_posterior(styled2);
        nn::Tensor s1 = model.reparameterize(post1, eps_rng);
        nn::Tensor s2 = model.reparameterize(post2, eps_rng);
        nn::Tensor memory = model.encode(memory_in);
        nn::Tensor recon = model.sequence_nll(memory, s1, target);
        nn::Tensor q = nn::concat_rows(nn::concat_rows(s1, s2), nn::concat_rows(s2, s1));
        nn::Tensor mmd = model.mmd_penalty(q, nn::Tensor::constant(prior));
        return nn::add(recon, nn::scale(mmd, 10.0));
      };
      std::vector<nn::Tensor> leaves;
      for (const auto& [name, t] : model.params().items()) leaves.push_back(t);
      const int per_leaf =
          std::max(1, gc_coords / static_cast<int>(leaves.size()) + 1);
      std::mt19937_64 rng(gc_seed + 2);
      const auto res = nn::finite_difference_check(build, leaves, per_leaf, 1e-5, rng);
      std::cout << "checked " << res.coords_checked
                << " coordinates, max relative error = " << res.max_rel_error << "\n";
      return res.max_rel_error < 1e-4 ? kExitOk : kExitData;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
