#include "dtx/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dtx/checkpoint.hpp"
#include "dtx/rand.hpp"

namespace dtx {

using nn::Tensor;

void TrainConfig::validate() const {
  if (learning_rate <= 0 || epochs < 1 || batch_size < 1 || temperature <= 0 ||
      lambda_mmd < 0 || warmup_steps < 0 || min_count < 1 || weight_decay < 0) {
    throw std::invalid_argument("degenerate train config");
  }
  if (noise.p_drop < 0 || noise.p_drop > 1 || noise.p_blank < 0 || noise.p_blank > 1 ||
      noise.p_repeat < 0 || noise.p_repeat > 1 || noise.swap_window < 1 ||
      noise.rule_mix < 0 || noise.rule_mix > 1) {
    throw std::invalid_argument("degenerate noise config");
  }
}

namespace {

ModelConfig resolve_model_config(ModelConfig cfg, const Vocab& vocab) {
  cfg.vocab_size = vocab.size();
  return cfg;
}

void check_finite(double x, const char* what, int step) {
  if (!std::isfinite(x)) {
    throw std::runtime_error(std::string("non-finite ") + what + " at step " +
                             std::to_string(step));
  }
}

}  // namespace

Trainer::Trainer(std::vector<Source> sources, TrainConfig config)
    : sources_(std::move(sources)),
      config_(config),
      vocab_(Vocab::build(sources_, config.min_count)),
      model_(resolve_model_config(config.model, vocab_), config.seed),
      optimizer_(&model_.params(),
                 nn::AdamWConfig{config.learning_rate, config.adam_beta1, config.adam_beta2,
                                 1e-8, config.weight_decay}),
      rng_(config.seed) {
  config_.validate();
}

int Trainer::steps_per_epoch() const {
  std::size_t total = 0;
  for (const auto& s : sources_) total += s.texts.size() + s.records.size();
  const std::size_t per_step = 2 * static_cast<std::size_t>(config_.batch_size);
  return static_cast<int>((total + per_step - 1) / per_step);
}

TokenSeq Trainer::frame_payload(const std::vector<int>& payload) const {
  TokenSeq seq;
  seq.ids.reserve(payload.size() + 2);
  seq.ids.push_back(Vocab::kBos);
  seq.ids.insert(seq.ids.end(), payload.begin(), payload.end());
  seq.ids.push_back(Vocab::kEos);
  return seq;
}

TokenSeq Trainer::prefixed_input(const std::vector<int>& payload, TaskPrefix prefix,
                                 bool style_slot) const {
  TokenSeq seq;
  seq.ids.push_back(Vocab::kBos);
  seq.ids.push_back(Vocab::kGenerate);
  seq.ids.push_back(prefix == TaskPrefix::Text ? Vocab::kTextPrefix : Vocab::kDataPrefix);
  if (style_slot) seq.ids.push_back(Vocab::kStyle);
  seq.ids.insert(seq.ids.end(), payload.begin(), payload.end());
  seq.ids.push_back(Vocab::kEos);
  return seq;
}

Tensor Trainer::zero_or_sampled_style() {
  if (config_.style_mode_for_bt == TrainConfig::StyleModeBT::Zero) {
    return model_.zero_style();
  }
  nn::Array s({1, model_.config().d_style});
  for (auto& x : s.v) x = normal01(rng_);
  return Tensor::constant(std::move(s));
}

void Trainer::Accumulated::add(const Tensor& term) {
  value_sum += term.item();
  ++count;
  loss = loss.defined() ? nn::add(loss, term) : term;
}

void Trainer::denoising_losses(const MixedBatch& batch, LossReport* report) {
  Accumulated text_acc, data_acc;

  auto corrupt_payload = [&](const std::vector<int>& payload, TaskPrefix prefix) {
    TokenSeq clean = prefixed_input(payload, prefix);
    TokenSeq noisy = corrupt(clean, config_.noise, rng_);
    // Repeat noise may overshoot the cap; truncate and restore the closure.
    if (noisy.length() > model_.config().max_len) {
      noisy.ids.resize(static_cast<std::size_t>(model_.config().max_len - 1));
      noisy.ids.push_back(Vocab::kEos);
    }
    return noisy;
  };

  for (const auto& text : batch.texts) {
    const auto payload = payload_ids(text, vocab_);
    bool rule = config_.noise.enable_rule && uniform01(rng_) < config_.noise.rule_mix;
    if (rule) {
      auto pair = rule_noise_text_to_data(text, batch.format, rng_);
      if (pair) {
        const auto pseudo = payload_ids(pair->second, vocab_);
        if (uniform01(rng_) < 0.5) {
          // Generation orientation: text in, pseudo-record out.
          Tensor memory = model_.encode(prefixed_input(payload, TaskPrefix::Data));
          data_acc.add(model_.sequence_nll(memory, model_.format_embedding(batch.format),
                                           frame_payload(pseudo)));
        } else {
          // Reconstruction orientation: the pseudo-record is the corrupted
          // form of the text it was sampled from.
          Tensor memory = model_.encode(prefixed_input(pseudo, TaskPrefix::Text));
          text_acc.add(
              model_.sequence_nll(memory, model_.zero_style(), frame_payload(payload)));
        }
        continue;
      }
    }
    Tensor memory = model_.encode(corrupt_payload(payload, TaskPrefix::Text));
    text_acc.add(model_.sequence_nll(memory, model_.zero_style(), frame_payload(payload)));
  }

  for (const auto& record : batch.records) {
    const std::string serialized = serialize(record);
    const auto payload = payload_ids(serialized, vocab_);
    bool rule = config_.noise.enable_rule && uniform01(rng_) < config_.noise.rule_mix;
    if (rule) {
      auto pair = rule_noise_data_to_text(record);
      const auto pseudo = payload_ids(pair.second, vocab_);
      if (uniform01(rng_) < 0.5) {
        // Generation orientation: record in, rule pseudo-text out.
        Tensor memory = model_.encode(prefixed_input(payload, TaskPrefix::Text));
        text_acc.add(
            model_.sequence_nll(memory, model_.zero_style(), frame_payload(pseudo)));
      } else {
        // Reconstruction orientation: the rule pseudo-text is the corrupted
        // form of the record.
        Tensor memory = model_.encode(prefixed_input(pseudo, TaskPrefix::Data));
        data_acc.add(model_.sequence_nll(memory, model_.format_embedding(batch.format),
                                         frame_payload(payload)));
      }
      continue;
    }
    Tensor memory = model_.encode(corrupt_payload(payload, TaskPrefix::Data));
    data_acc.add(model_.sequence_nll(memory, model_.format_embedding(batch.format),
                                     frame_payload(payload)));
  }

  Tensor total;
  if (text_acc.loss.defined()) {
    total = nn::scale(text_acc.loss, 1.0 / text_acc.count);
  }
  if (data_acc.loss.defined()) {
    Tensor d = nn::scale(data_acc.loss, 1.0 / data_acc.count);
    total = total.defined() ? nn::add(total, d) : d;
  }
  if (total.defined()) nn::backward(total);
  report->denoising_text = text_acc.mean();
  report->denoising_data = data_acc.mean();
}

void Trainer::t2d_cycle_losses(const MixedBatch& batch, LossReport* report) {
  Accumulated acc;
  for (const auto& record : batch.records) {
    const std::string serialized = serialize(record);
    const auto record_payload = payload_ids(serialized, vocab_);
    Tensor bt_style = zero_or_sampled_style();

    // Synthetic text, no gradient.
    TokenSeq draft;
    {
      nn::NoGradGuard guard;
      const nn::Array memory =
          model_.encode(prefixed_input(record_payload, TaskPrefix::Text)).value();
      draft = greedy_decode(model_, memory, bt_style.value(), model_.config().max_len).seq;
    }
    std::vector<int> draft_payload;
    for (int id : draft.ids) {
      if (id != Vocab::kBos && id != Vocab::kEos) draft_payload.push_back(id);
    }
    if (draft_payload.empty()) {
      ++skipped_pairs_;
      continue;
    }
    if (static_cast<int>(draft_payload.size()) + 4 > model_.config().max_len) {
      draft_payload.resize(static_cast<std::size_t>(model_.config().max_len - 4));
    }

    Tensor memory = model_.encode(prefixed_input(draft_payload, TaskPrefix::Data));
    acc.add(model_.sequence_nll(memory, model_.format_embedding(batch.format),
                                frame_payload(record_payload)));
  }
  if (acc.loss.defined()) nn::backward(nn::scale(acc.loss, 1.0 / acc.count));
  report->cycle_data = acc.mean();
}

void Trainer::d2t_cycle_losses(const MixedBatch& batch, LossReport* report) {
  Accumulated acc;
  Tensor style_rows;  // batch posterior samples for the MMD term
  for (const auto& text : batch.texts) {
    const auto text_payload = payload_ids(text, vocab_);

    // Synthetic record string, no gradient; consumed as tokens.
    TokenSeq draft;
    {
      nn::NoGradGuard guard;
      const nn::Array memory =
          model_.encode(prefixed_input(text_payload, TaskPrefix::Data)).value();
      const nn::Array cond = model_.format_embedding(batch.format).value();
      draft = greedy_decode(model_, memory, cond, model_.config().max_len).seq;
    }
    std::vector<int> draft_payload;
    for (int id : draft.ids) {
      if (id != Vocab::kBos && id != Vocab::kEos) draft_payload.push_back(id);
    }
    if (static_cast<int>(draft_payload.size()) + 4 > model_.config().max_len) {
      draft_payload.resize(static_cast<std::size_t>(model_.config().max_len - 4));
    }

    // Style posterior from the observed text, reparameterized sample.
    StylePosterior post =
        model_.style_posterior(prefixed_input(text_payload, TaskPrefix::Text, true));
    Tensor s = model_.reparameterize(post, rng_);
    style_rows = style_rows.defined() ? nn::concat_rows(style_rows, s) : s;

    Tensor memory = model_.encode(prefixed_input(draft_payload, TaskPrefix::Text));
    acc.add(model_.sequence_nll(memory, s, frame_payload(text_payload)));
  }

  Tensor total;
  if (acc.loss.defined()) total = nn::scale(acc.loss, 1.0 / acc.count);
  if (style_rows.defined() && style_rows.value().rows() >= 2 && config_.lambda_mmd > 0) {
    nn::Array prior({style_rows.value().rows(), model_.config().d_style});
    for (auto& x : prior.v) x = normal01(rng_);
    Tensor mmd = model_.mmd_penalty(style_rows, Tensor::constant(std::move(prior)));
    report->mmd_term = mmd.item();
    Tensor weighted = nn::scale(mmd, config_.lambda_mmd);
    total = total.defined() ? nn::add(total, weighted) : weighted;
  }
  if (total.defined()) nn::backward(total);
  report->cycle_text = acc.mean();
}

LossReport Trainer::step() {
  LossReport report;
  report.step = global_step_;
  MixedBatch batch = next_batch(sources_, config_.batch_size, config_.temperature, rng_);

  if (config_.denoising_enabled) denoising_losses(batch, &report);
  if (global_step_ >= config_.warmup_steps || !config_.denoising_enabled) {
    t2d_cycle_losses(batch, &report);
    d2t_cycle_losses(batch, &report);
  }

  report.total = report.denoising_text + report.denoising_data + report.cycle_text +
                 report.cycle_data + config_.lambda_mmd * report.mmd_term;
  check_finite(report.denoising_text, "denoising_text", global_step_);
  check_finite(report.denoising_data, "denoising_data", global_step_);
  check_finite(report.cycle_text, "cycle_text", global_step_);
  check_finite(report.cycle_data, "cycle_data", global_step_);
  check_finite(report.mmd_term, "mmd_term", global_step_);

  optimizer_.step();  // one update regardless of how many terms contributed
  ++global_step_;
  history_.push_back(report);
  return report;
}

namespace {

nlohmann::json noise_to_json(const NoiseConfig& n) {
  return {{"p_drop", n.p_drop},          {"p_blank", n.p_blank},
          {"p_repeat", n.p_repeat},      {"swap_window", n.swap_window},
          {"enable_swap", n.enable_swap}, {"enable_drop", n.enable_drop},
          {"enable_blank", n.enable_blank}, {"enable_repeat", n.enable_repeat},
          {"enable_rule", n.enable_rule}, {"rule_mix", n.rule_mix}};
}

void write_run_config(Trainer& trainer, const TrainConfig& cfg,
                      const std::string& run_dir, const std::string& mode) {
  nlohmann::json j = {
      {"schema", "CTXT1"},
      {"mode", mode},
      {"model",
       {{"d_model", trainer.model().config().d_model},
        {"n_heads", trainer.model().config().n_heads},
        {"n_enc_layers", trainer.model().config().n_enc_layers},
        {"n_dec_layers", trainer.model().config().n_dec_layers},
        {"d_ff", trainer.model().config().d_ff},
        {"d_style", trainer.model().config().d_style},
        {"vocab_size", trainer.model().config().vocab_size},
        {"max_len", trainer.model().config().max_len},
        {"n_formats", trainer.model().config().n_formats}}},
      {"train",
       {{"learning_rate", cfg.learning_rate},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"temperature", cfg.temperature},
        {"lambda_mmd", cfg.lambda_mmd},
        {"style_mode_for_bt",
         cfg.style_mode_for_bt == TrainConfig::StyleModeBT::Zero ? "zero" : "sample"},
        {"seed", cfg.seed},
        {"warmup_steps", cfg.warmup_steps},
        {"denoising_enabled", cfg.denoising_enabled},
        {"weight_decay", cfg.weight_decay},
        {"noise", noise_to_json(cfg.noise)}}}};
  std::ofstream out(std::filesystem::path(run_dir) / "config.json");
  out << j.dump(2) << "\n";
}

}  // namespace

void Trainer::train(const std::string& run_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);
  const int per_epoch = steps_per_epoch();
  for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
    for (int s = 0; s < per_epoch; ++s) step();
    save_model(model_, vocab_, (fs::path(run_dir) / ("ckpt_epoch" + std::to_string(epoch))).string());
  }
  write_losses_csv(history_, (fs::path(run_dir) / "losses.csv").string());
  write_run_config(*this, config_, run_dir, "unsupervised");
}

void Trainer::train_supervised(const std::string& run_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);

  std::vector<std::pair<int, int>> index;  // (source, pair)
  for (std::size_t si = 0; si < sources_.size(); ++si) {
    for (std::size_t pi = 0; pi < sources_[si].train_pairs.size(); ++pi) {
      index.emplace_back(static_cast<int>(si), static_cast<int>(pi));
    }
  }
  if (index.empty()) throw std::runtime_error("no aligned train_pairs for supervised mode");

  for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
    // Deterministic shuffle from the trainer RNG.
    for (std::size_t i = index.size(); i > 1; --i) {
      std::swap(index[i - 1], index[static_cast<std::size_t>(uniform_int(
                                  rng_, static_cast<int>(i)))]);
    }
    Accumulated acc;
    for (std::size_t i = 0; i < index.size(); ++i) {
      const Source& src = sources_[static_cast<std::size_t>(index[i].first)];
      const EvalPair& pair = src.train_pairs[static_cast<std::size_t>(index[i].second)];
      const auto text_payload = payload_ids(pair.text, vocab_);
      const auto record_payload = payload_ids(serialize(pair.record), vocab_);

      Tensor d2t_memory = model_.encode(prefixed_input(record_payload, TaskPrefix::Text));
      acc.add(model_.sequence_nll(d2t_memory, model_.zero_style(), frame_payload(text_payload)));
      Tensor t2d_memory = model_.encode(prefixed_input(text_payload, TaskPrefix::Data));
      acc.add(model_.sequence_nll(t2d_memory, model_.format_embedding(src.format),
                                  frame_payload(record_payload)));

      if (acc.count >= 2 * config_.batch_size || i + 1 == index.size()) {
        nn::backward(nn::scale(acc.loss, 1.0 / acc.count));
        check_finite(acc.mean(), "supervised_nll", global_step_);
        optimizer_.step();
        LossReport report;
        report.step = global_step_++;
        report.denoising_text = acc.mean();
        report.total = acc.mean();
        history_.push_back(report);
        acc = Accumulated{};
      }
    }
    save_model(model_, vocab_, (fs::path(run_dir) / ("ckpt_epoch" + std::to_string(epoch))).string());
  }
  write_losses_csv(history_, (fs::path(run_dir) / "losses.csv").string());
  write_run_config(*this, config_, run_dir, "supervised");
}

double Trainer::identity_collapse_fraction(int max_records_per_source) {
  long long copies = 0, total = 0;
  for (const auto& src : sources_) {
    const int n = std::min<int>(max_records_per_source, static_cast<int>(src.records.size()));
    for (int i = 0; i < n; ++i) {
      const std::string serialized = serialize(src.records[static_cast<std::size_t>(i)]);
      const auto input_payload = payload_ids(serialized, vocab_);
      const DecodeResult out =
          d2t_first_pass(model_, vocab_, src.records[static_cast<std::size_t>(i)],
                         model_.config().max_len);
      std::vector<int> out_payload;
      for (int id : out.seq.ids) {
        if (id != Vocab::kBos && id != Vocab::kEos) out_payload.push_back(id);
      }
      copies += out_payload == input_payload;
      ++total;
    }
  }
  return total ? static_cast<double>(copies) / static_cast<double>(total) : 0.0;
}

void write_losses_csv(const std::vector<LossReport>& history, const std::string& path) {
  std::ofstream out(path);
  out << "step,denoising_text,denoising_data,cycle_text,cycle_data,mmd,total\n";
  for (const auto& r : history) {
    out << r.step << ',' << r.denoising_text << ',' << r.denoising_data << ',' << r.cycle_text
        << ',' << r.cycle_data << ',' << r.mmd_term << ',' << r.total << "\n";
  }
}

}  // namespace dtx
