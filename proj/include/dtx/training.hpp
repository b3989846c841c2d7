// training.hpp -- the cycle-training loop: denoising objective, both
// back-translation objectives with no-gradient synthetic generation, one
// accumulated optimizer update per step, and a supervised baseline.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtx/inference.hpp"
#include "dtx/model.hpp"
#include "dtx/noise.hpp"

namespace dtx {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 10;
  int batch_size = 8;
  double temperature = 2.0;
  double lambda_mmd = 10.0;
  NoiseConfig noise;
  enum class StyleModeBT { Zero, Sample };
  StyleModeBT style_mode_for_bt = StyleModeBT::Zero;
  std::uint64_t seed = 1;
  int warmup_steps = 200;         // denoising-only steps at the start
  bool denoising_enabled = true;  // ablation switch
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;  // short runs want the faster-adapting default
  int min_count = 1;
  ModelConfig model;  // vocab_size is filled in from the corpus

  void validate() const;
};

struct LossReport {
  int step{0};
  double denoising_text{0.0};
  double denoising_data{0.0};
  double cycle_text{0.0};  // -L_x reconstruction
  double cycle_data{0.0};  // -L_y reconstruction
  double mmd_term{0.0};
  double total{0.0};
};

class Trainer {
 public:
  Trainer(std::vector<Source> sources, TrainConfig config);

  // One loop iteration: all enabled loss terms accumulate gradients, then a
  // single optimizer update. Throws on non-finite loss values.
  LossReport step();

  // Full run: epochs * steps_per_epoch() steps, a checkpoint per epoch,
  // losses.csv and config.json under run_dir.
  void train(const std::string& run_dir);

  int steps_per_epoch() const;
  Model& model() { return model_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<Source>& sources() const { return sources_; }
  const std::vector<LossReport>& history() const { return history_; }
  long long skipped_pairs() const { return skipped_pairs_; }
  int global_step() const { return global_step_; }

  // Fraction of first-pass greedy data-to-text outputs that copy their input
  // token-for-token; the identity-collapse detector.
  double identity_collapse_fraction(int max_records_per_source = 25);

  // Supervised baseline: direct conditional NLL on the sources' aligned
  // train_pairs in both directions, same prefixes and machinery.
  void train_supervised(const std::string& run_dir);

 private:
  struct Accumulated {
    nn::Tensor loss;  // undefined until first term
    double value_sum{0.0};
    int count{0};

    void add(const nn::Tensor& term);
    double mean() const { return count ? value_sum / count : 0.0; }
  };

  TokenSeq frame_payload(const std::vector<int>& payload) const;
  TokenSeq prefixed_input(const std::vector<int>& payload, TaskPrefix prefix,
                          bool style_slot = false) const;
  nn::Tensor zero_or_sampled_style();

  void denoising_losses(const MixedBatch& batch, LossReport* report);
  void t2d_cycle_losses(const MixedBatch& batch, LossReport* report);
  void d2t_cycle_losses(const MixedBatch& batch, LossReport* report);

  std::vector<Source> sources_;
  TrainConfig config_;
  Vocab vocab_;
  Model model_;
  nn::AdamW optimizer_;
  std::mt19937_64 rng_;
  std::vector<LossReport> history_;
  long long skipped_pairs_{0};
  int global_step_{0};
};

void write_losses_csv(const std::vector<LossReport>& history, const std::string& path);

}  // namespace dtx
