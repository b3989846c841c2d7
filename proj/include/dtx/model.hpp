// model.hpp -- one weight-shared pre-LN transformer encoder-decoder serving
// both conversion directions, with a Gaussian style head read at the [STYLE]
// slot, a learned format embedding, and a conditioning row prepended to the
// decoder memory.

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "dtx/corpus.hpp"
#include "dtx/nn.hpp"

namespace dtx {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_ff = 128;
  int d_style = 8;
  int vocab_size = 0;
  int max_len = 64;
  int n_formats = kNumFormats;

  void validate() const;
};

class SeqTooLong : public std::runtime_error {
 public:
  explicit SeqTooLong(const std::string& what) : std::runtime_error(what) {}
};
class MissingStyleToken : public std::runtime_error {
 public:
  explicit MissingStyleToken(const std::string& what) : std::runtime_error(what) {}
};

// Diagonal Gaussian over the style latent; log-variance keeps the covariance
// positive.
struct StylePosterior {
  nn::Tensor mu;       // [1, d_style]
  nn::Tensor log_var;  // [1, d_style]
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Encoder output [L, d_model]; deterministic given weights.
  nn::Tensor encode(const TokenSeq& seq) const;

  // Reads the encoder output at the [STYLE] slot of an encode(.., style_slot)
  // sequence and applies the two linear heads.
  StylePosterior style_posterior(const TokenSeq& styled_seq) const;

  // s = mu + exp(log_var / 2) * eps with eps ~ N(0, I).
  nn::Tensor reparameterize(const StylePosterior& posterior, std::mt19937_64& rng) const;

  nn::Tensor format_embedding(Format f) const;  // [1, d_style]
  nn::Tensor zero_style() const;                // [1, d_style] constant

  // Teacher-forced logits [|teacher|-1, vocab]; the conditioning vector is
  // projected to d_model and prepended as one extra attendable memory row.
  nn::Tensor decode_logits(const nn::Tensor& memory, const nn::Tensor& cond,
                           const TokenSeq& teacher) const;

  // Per-token mean NLL of `target` given (memory, cond); scalar graph tensor.
  nn::Tensor sequence_nll(const nn::Tensor& memory, const nn::Tensor& cond,
                          const TokenSeq& target) const;

  // MMD between posterior samples and prior samples with the fixed-bandwidth
  // Gaussian kernel (sigma^2 = d_style).
  nn::Tensor mmd_penalty(const nn::Tensor& q_samples, const nn::Tensor& prior_samples) const;

  // Value-only encoder pass for generation.
  nn::Array encode_array(const TokenSeq& seq) const;
  nn::Array style_mu_array(const TokenSeq& styled_seq) const;         // [d_style]
  nn::Array style_sample_array(const TokenSeq& styled_seq, std::mt19937_64& rng) const;
  nn::Array format_embedding_array(Format f) const;                   // [d_style]
  nn::Array zero_style_array() const { return nn::Array({1, config_.d_style}); }

  // Incremental decoder over a fixed (memory, cond); caches K/V per layer.
  class Decoder {
   public:
    Decoder(const Model& model, const nn::Array& memory, const nn::Array& cond);
    // Feed the previously emitted token (BOS first); returns logits [vocab].
    std::vector<double> step(int token_id);
    int position() const { return position_; }

   private:
    const Model* model_;
    nn::Array memory2_;                      // cond row + memory
    std::vector<nn::Array> cross_k_, cross_v_;  // per layer [M+1, d_model]
    std::vector<nn::Array> self_k_, self_v_;    // per layer [t, d_model], grown per step
    int position_{0};
  };

 private:
  friend class Decoder;
  ModelConfig config_;
  nn::ParamStore params_;

  nn::Tensor attention(const nn::Tensor& queries_in, const nn::Tensor& kv_in,
                       const std::string& prefix, bool causal) const;
  nn::Tensor feed_forward(const nn::Tensor& x, const std::string& prefix) const;
  nn::Tensor condition_row(const nn::Tensor& cond) const;  // [1, d_model]
};

// Upper bound on style/content mutual information from the Gaussian prior
// entropy: (d/2) (1 + log 2 pi).
double style_entropy_bound(int d_style);

// Checkpoint plus sibling config.json and vocab.txt.
void save_model(const Model& model, const Vocab& vocab, const std::string& ckpt_path);
struct LoadedModel {
  Model model;
  Vocab vocab;
};
LoadedModel load_model(const std::string& ckpt_path);

}  // namespace dtx
