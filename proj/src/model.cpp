#include "dtx/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dtx/checkpoint.hpp"
#include "dtx/rand.hpp"

namespace dtx {

using nn::Array;
using nn::Tensor;

void ModelConfig::validate() const {
  if (d_model < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument("d_model must be a positive multiple of n_heads");
  }
  if (d_style < 1) throw std::invalid_argument("d_style must be >= 1");
  if (vocab_size < Vocab::kReserved) throw std::invalid_argument("vocab_size too small");
  if (max_len < 4) throw std::invalid_argument("max_len too small");
  if (n_enc_layers < 1 || n_dec_layers < 1 || d_ff < 1 || n_formats < 1) {
    throw std::invalid_argument("degenerate model config");
  }
}

namespace {

Array normal_init(std::vector<int> shape, double stddev, std::mt19937_64& rng) {
  Array a(std::move(shape));
  for (auto& x : a.v) x = stddev * normal01(rng);
  return a;
}

Array ones(int n) {
  Array a({n});
  std::fill(a.v.begin(), a.v.end(), 1.0);
  return a;
}

constexpr double kInitStd = 0.05;
constexpr double kNegInf = -1e9;

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const int d = config_.d_model;

  auto make_attention = [&](const std::string& prefix) {
    params_.create(prefix + ".wq", normal_init({d, d}, kInitStd, rng));
    params_.create(prefix + ".bq", Array({d}));
    params_.create(prefix + ".wk", normal_init({d, d}, kInitStd, rng));
    params_.create(prefix + ".bk", Array({d}));
    params_.create(prefix + ".wv", normal_init({d, d}, kInitStd, rng));
    params_.create(prefix + ".bv", Array({d}));
    params_.create(prefix + ".wo", normal_init({d, d}, kInitStd, rng));
    params_.create(prefix + ".bo", Array({d}));
  };
  auto make_layer_norm = [&](const std::string& prefix) {
    params_.create(prefix + ".g", ones(d));
    params_.create(prefix + ".b", Array({d}));
  };
  auto make_ff = [&](const std::string& prefix) {
    params_.create(prefix + ".w1", normal_init({config_.d_ff, d}, kInitStd, rng));
    params_.create(prefix + ".b1", Array({config_.d_ff}));
    params_.create(prefix + ".w2", normal_init({d, config_.d_ff}, kInitStd, rng));
    params_.create(prefix + ".b2", Array({d}));
  };

  params_.create("tok_emb", normal_init({config_.vocab_size, d}, kInitStd, rng));
  params_.create("pos_emb", normal_init({config_.max_len, d}, kInitStd, rng));
  for (int l = 0; l < config_.n_enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    make_layer_norm(p + ".ln1");
    make_attention(p + ".attn");
    make_layer_norm(p + ".ln2");
    make_ff(p + ".ff");
  }
  make_layer_norm("enc.final_ln");
  for (int l = 0; l < config_.n_dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    make_layer_norm(p + ".ln1");
    make_attention(p + ".self");
    make_layer_norm(p + ".ln2");
    make_attention(p + ".cross");
    make_layer_norm(p + ".ln3");
    make_ff(p + ".ff");
  }
  make_layer_norm("dec.final_ln");
  // Output projection tied to the token embedding table.
  params_.create("out.b", Array({config_.vocab_size}));

  params_.create("style.w_mu", normal_init({config_.d_style, d}, kInitStd, rng));
  params_.create("style.b_mu", Array({config_.d_style}));
  params_.create("style.w_lv", normal_init({config_.d_style, d}, kInitStd, rng));
  params_.create("style.b_lv", Array({config_.d_style}));
  params_.create("fmt.w", normal_init({config_.n_formats, config_.d_style}, kInitStd, rng));
  params_.create("fmt.b", Array({config_.d_style}));
  params_.create("cond.w", normal_init({d, config_.d_style}, kInitStd, rng));
  params_.create("cond.b", Array({d}));
}

Tensor Model::attention(const Tensor& queries_in, const Tensor& kv_in,
                        const std::string& prefix, bool causal) const {
  const int d = config_.d_model;
  const int dh = d / config_.n_heads;
  Tensor q = nn::linear(queries_in, params_.get(prefix + ".wq"), params_.get(prefix + ".bq"));
  Tensor k = nn::linear(kv_in, params_.get(prefix + ".wk"), params_.get(prefix + ".bk"));
  Tensor v = nn::linear(kv_in, params_.get(prefix + ".wv"), params_.get(prefix + ".bv"));

  Tensor mask;
  if (causal) {
    const int t = queries_in.value().rows();
    Array m({t, t});
    for (int i = 0; i < t; ++i) {
      for (int j = i + 1; j < t; ++j) m.at(i, j) = kNegInf;
    }
    mask = Tensor::constant(std::move(m));
  }

  Tensor wo = params_.get(prefix + ".wo");
  Tensor out;
  for (int h = 0; h < config_.n_heads; ++h) {
    Tensor qh = nn::slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = nn::slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = nn::slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = nn::scale(nn::matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
    if (causal) scores = nn::add(scores, mask);
    Tensor ctx = nn::matmul(nn::softmax_rows(scores), vh);
    // Equivalent to concatenating heads and multiplying by wo^T.
    Tensor head_out = nn::matmul_nt(ctx, nn::slice_cols(wo, h * dh, (h + 1) * dh));
    out = out.defined() ? nn::add(out, head_out) : head_out;
  }
  return nn::add_rowvec(out, params_.get(prefix + ".bo"));
}

Tensor Model::feed_forward(const Tensor& x, const std::string& prefix) const {
  Tensor h = nn::gelu(nn::linear(x, params_.get(prefix + ".w1"), params_.get(prefix + ".b1")));
  return nn::linear(h, params_.get(prefix + ".w2"), params_.get(prefix + ".b2"));
}

Tensor Model::encode(const TokenSeq& seq) const {
  const int len = seq.length();
  if (len > config_.max_len) {
    throw SeqTooLong("sequence length " + std::to_string(len) + " exceeds max_len");
  }
  if (len < 1) throw nn::ShapeError("empty sequence");
  std::vector<int> positions(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) positions[static_cast<std::size_t>(i)] = i;
  Tensor x = nn::add(nn::embedding_lookup(params_.get("tok_emb"), seq.ids),
                     nn::embedding_lookup(params_.get("pos_emb"), positions));
  for (int l = 0; l < config_.n_enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    Tensor normed = nn::layer_norm(x, params_.get(p + ".ln1.g"), params_.get(p + ".ln1.b"));
    x = nn::add(x, attention(normed, normed, p + ".attn", false));
    Tensor normed2 = nn::layer_norm(x, params_.get(p + ".ln2.g"), params_.get(p + ".ln2.b"));
    x = nn::add(x, feed_forward(normed2, p + ".ff"));
  }
  return nn::layer_norm(x, params_.get("enc.final_ln.g"), params_.get("enc.final_ln.b"));
}

StylePosterior Model::style_posterior(const TokenSeq& styled_seq) const {
  int style_pos = -1;
  for (int i = 0; i < styled_seq.length(); ++i) {
    if (styled_seq.ids[static_cast<std::size_t>(i)] == Vocab::kStyle) {
      style_pos = i;
      break;
    }
  }
  if (style_pos < 0) throw MissingStyleToken("sequence has no [STYLE] token");
  Tensor h = nn::slice_rows(encode(styled_seq), style_pos, style_pos + 1);
  StylePosterior post;
  post.mu = nn::linear(h, params_.get("style.w_mu"), params_.get("style.b_mu"));
  post.log_var = nn::linear(h, params_.get("style.w_lv"), params_.get("style.b_lv"));
  return post;
}

Tensor Model::reparameterize(const StylePosterior& posterior, std::mt19937_64& rng) const {
  Array eps({1, config_.d_style});
  for (auto& x : eps.v) x = normal01(rng);
  Tensor sigma = nn::exp_op(nn::scale(posterior.log_var, 0.5));
  return nn::add(posterior.mu, nn::mul(sigma, Tensor::constant(std::move(eps))));
}

Tensor Model::format_embedding(Format f) const {
  Tensor row = nn::embedding_lookup(params_.get("fmt.w"), {format_index(f)});
  return nn::add_rowvec(row, params_.get("fmt.b"));
}

Tensor Model::zero_style() const { return Tensor::constant(Array({1, config_.d_style})); }

Tensor Model::condition_row(const Tensor& cond) const {
  return nn::linear(cond, params_.get("cond.w"), params_.get("cond.b"));
}

Tensor Model::decode_logits(const Tensor& memory, const Tensor& cond,
                            const TokenSeq& teacher) const {
  const int t_len = teacher.length();
  if (t_len < 2) throw nn::ShapeError("teacher sequence needs at least BOS and one target");
  if (t_len - 1 > config_.max_len) throw SeqTooLong("teacher sequence exceeds max_len");
  Tensor memory2 = nn::concat_rows(condition_row(cond), memory);

  std::vector<int> in_ids(teacher.ids.begin(), teacher.ids.end() - 1);
  std::vector<int> positions(in_ids.size());
  for (std::size_t i = 0; i < in_ids.size(); ++i) positions[i] = static_cast<int>(i);
  Tensor x = nn::add(nn::embedding_lookup(params_.get("tok_emb"), in_ids),
                     nn::embedding_lookup(params_.get("pos_emb"), positions));
  for (int l = 0; l < config_.n_dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    Tensor n1 = nn::layer_norm(x, params_.get(p + ".ln1.g"), params_.get(p + ".ln1.b"));
    x = nn::add(x, attention(n1, n1, p + ".self", true));
    Tensor n2 = nn::layer_norm(x, params_.get(p + ".ln2.g"), params_.get(p + ".ln2.b"));
    x = nn::add(x, attention(n2, memory2, p + ".cross", false));
    Tensor n3 = nn::layer_norm(x, params_.get(p + ".ln3.g"), params_.get(p + ".ln3.b"));
    x = nn::add(x, feed_forward(n3, p + ".ff"));
  }
  x = nn::layer_norm(x, params_.get("dec.final_ln.g"), params_.get("dec.final_ln.b"));
  return nn::linear(x, params_.get("tok_emb"), params_.get("out.b"));
}

Tensor Model::sequence_nll(const Tensor& memory, const Tensor& cond,
                           const TokenSeq& target) const {
  Tensor logits = decode_logits(memory, cond, target);
  std::vector<int> targets(target.ids.begin() + 1, target.ids.end());
  Tensor ce = nn::cross_entropy_with_logits(logits, targets);
  return nn::scale(ce, 1.0 / static_cast<double>(targets.size()));
}

Tensor Model::mmd_penalty(const Tensor& q_samples, const Tensor& prior_samples) const {
  return nn::mmd_ustat(q_samples, prior_samples, static_cast<double>(config_.d_style));
}

Array Model::encode_array(const TokenSeq& seq) const {
  nn::NoGradGuard guard;
  return encode(seq).value();
}

Array Model::style_mu_array(const TokenSeq& styled_seq) const {
  nn::NoGradGuard guard;
  return style_posterior(styled_seq).mu.value();
}

Array Model::style_sample_array(const TokenSeq& styled_seq, std::mt19937_64& rng) const {
  nn::NoGradGuard guard;
  return reparameterize(style_posterior(styled_seq), rng).value();
}

Array Model::format_embedding_array(Format f) const {
  nn::NoGradGuard guard;
  return format_embedding(f).value();
}

// --- incremental decoding ----------------------------------------------------

namespace {

// y = x W^T + b for a single row.
Array row_linear(const Array& x, const Array& w, const Array& b) {
  const int out_dim = w.rows(), in_dim = w.cols();
  Array y({1, out_dim});
  const double* px = x.v.data();
  for (int o = 0; o < out_dim; ++o) {
    const double* wrow = w.v.data() + static_cast<std::size_t>(o) * in_dim;
    double acc = b.size() ? b.v[static_cast<std::size_t>(o)] : 0.0;
    for (int i = 0; i < in_dim; ++i) acc += px[i] * wrow[i];
    y.v[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

Array mat_linear(const Array& x, const Array& w, const Array& b) {
  Array y({x.rows(), w.rows()});
  nn::gemm_nt(x, w, &y, true);
  for (int i = 0; i < y.rows(); ++i) {
    for (int j = 0; j < y.cols(); ++j) y.at(i, j) += b.v[static_cast<std::size_t>(j)];
  }
  return y;
}

void layer_norm_row_inplace(Array* x, const Array& g, const Array& b, double eps = 1e-5) {
  const int n = static_cast<int>(x->size());
  double mean = 0.0;
  for (double v : x->v) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x->v) var += (v - mean) * (v - mean);
  var /= n;
  const double istd = 1.0 / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) {
    x->v[static_cast<std::size_t>(i)] =
        (x->v[static_cast<std::size_t>(i)] - mean) * istd * g.v[static_cast<std::size_t>(i)] +
        b.v[static_cast<std::size_t>(i)];
  }
}

void append_row(Array* m, const Array& row) {
  m->shape[0] += 1;
  m->v.insert(m->v.end(), row.v.begin(), row.v.end());
}

}  // namespace

Model::Decoder::Decoder(const Model& model, const Array& memory, const Array& cond)
    : model_(&model) {
  const auto& p = model.params_;
  nn::NoGradGuard guard;
  // cond row via the same projection as the graph path
  Array cond_row = row_linear(cond, p.get("cond.w").value(), p.get("cond.b").value());
  memory2_ = Array({memory.rows() + 1, memory.cols()});
  std::copy(cond_row.v.begin(), cond_row.v.end(), memory2_.v.begin());
  std::copy(memory.v.begin(), memory.v.end(), memory2_.v.begin() + memory.cols());

  for (int l = 0; l < model.config_.n_dec_layers; ++l) {
    const std::string pre = "dec." + std::to_string(l) + ".cross";
    cross_k_.push_back(mat_linear(memory2_, p.get(pre + ".wk").value(), p.get(pre + ".bk").value()));
    cross_v_.push_back(mat_linear(memory2_, p.get(pre + ".wv").value(), p.get(pre + ".bv").value()));
    self_k_.push_back(Array({0, model.config_.d_model}));
    self_v_.push_back(Array({0, model.config_.d_model}));
  }
}

std::vector<double> Model::Decoder::step(int token_id) {
  const ModelConfig& cfg = model_->config_;
  if (position_ >= cfg.max_len) throw SeqTooLong("decoder ran past max_len");
  const auto& p = model_->params_;
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;

  Array x({1, d});
  {
    const Array& tok = p.get("tok_emb").value();
    const Array& pos = p.get("pos_emb").value();
    for (int j = 0; j < d; ++j) {
      x.v[static_cast<std::size_t>(j)] = tok.at(token_id, j) + pos.at(position_, j);
    }
  }

  auto attend = [&](const Array& q_row, const Array& keys, const Array& values,
                    const Array& wo, const Array& bo) {
    const int t = keys.rows();
    Array ctx({1, d});
    std::vector<double> scores(static_cast<std::size_t>(t));
    for (int h = 0; h < cfg.n_heads; ++h) {
      const int off = h * dh;
      double mx = -1e300;
      for (int j = 0; j < t; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) {
          s += q_row.v[static_cast<std::size_t>(off + c)] * keys.at(j, off + c);
        }
        s /= std::sqrt(double(dh));
        scores[static_cast<std::size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (int j = 0; j < t; ++j) {
        scores[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
        z += scores[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < t; ++j) {
        const double w = scores[static_cast<std::size_t>(j)] / z;
        for (int c = 0; c < dh; ++c) ctx.v[static_cast<std::size_t>(off + c)] += w * values.at(j, off + c);
      }
    }
    return row_linear(ctx, wo, bo);
  };

  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    const std::size_t lu = static_cast<std::size_t>(l);
    Array n1 = x;
    layer_norm_row_inplace(&n1, p.get(pre + ".ln1.g").value(), p.get(pre + ".ln1.b").value());
    Array q = row_linear(n1, p.get(pre + ".self.wq").value(), p.get(pre + ".self.bq").value());
    Array k = row_linear(n1, p.get(pre + ".self.wk").value(), p.get(pre + ".self.bk").value());
    Array v = row_linear(n1, p.get(pre + ".self.wv").value(), p.get(pre + ".self.bv").value());
    append_row(&self_k_[lu], k);
    append_row(&self_v_[lu], v);
    Array self_out = attend(q, self_k_[lu], self_v_[lu], p.get(pre + ".self.wo").value(),
                            p.get(pre + ".self.bo").value());
    for (std::size_t i = 0; i < x.size(); ++i) x.v[i] += self_out.v[i];

    Array n2 = x;
    layer_norm_row_inplace(&n2, p.get(pre + ".ln2.g").value(), p.get(pre + ".ln2.b").value());
    Array qc = row_linear(n2, p.get(pre + ".cross.wq").value(), p.get(pre + ".cross.bq").value());
    Array cross_out = attend(qc, cross_k_[lu], cross_v_[lu], p.get(pre + ".cross.wo").value(),
                             p.get(pre + ".cross.bo").value());
    for (std::size_t i = 0; i < x.size(); ++i) x.v[i] += cross_out.v[i];

    Array n3 = x;
    layer_norm_row_inplace(&n3, p.get(pre + ".ln3.g").value(), p.get(pre + ".ln3.b").value());
    Array h = row_linear(n3, p.get(pre + ".ff.w1").value(), p.get(pre + ".ff.b1").value());
    for (auto& hv : h.v) {
      const double u = 0.7978845608028654 * (hv + 0.044715 * hv * hv * hv);
      hv = 0.5 * hv * (1.0 + std::tanh(u));
    }
    Array f = row_linear(h, p.get(pre + ".ff.w2").value(), p.get(pre + ".ff.b2").value());
    for (std::size_t i = 0; i < x.size(); ++i) x.v[i] += f.v[i];
  }

  layer_norm_row_inplace(&x, p.get("dec.final_ln.g").value(), p.get("dec.final_ln.b").value());
  Array logits = row_linear(x, p.get("tok_emb").value(), p.get("out.b").value());
  ++position_;
  return logits.v;
}

double style_entropy_bound(int d_style) {
  if (d_style < 1) throw std::invalid_argument("d_style must be >= 1");
  return 0.5 * d_style * (1.0 + std::log(2.0 * 3.14159265358979323846));
}

// --- persistence ---------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},     {"n_heads", c.n_heads},
          {"n_enc_layers", c.n_enc_layers}, {"n_dec_layers", c.n_dec_layers},
          {"d_ff", c.d_ff},           {"d_style", c.d_style},
          {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
          {"n_formats", c.n_formats}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.d_style = j.at("d_style").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.n_formats = j.at("n_formats").get<int>();
  return c;
}

}  // namespace

void save_model(const Model& model, const Vocab& vocab, const std::string& ckpt_path) {
  namespace fs = std::filesystem;
  const fs::path path(ckpt_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(ckpt_path, snapshot(model.params()));
  nlohmann::json j = {{"schema", "CTXT1"}, {"model", config_to_json(model.config())}};
  std::ofstream out(path.parent_path() / "config.json");
  out << j.dump(2) << "\n";
  vocab.save((path.parent_path() / "vocab.txt").string());
}

LoadedModel load_model(const std::string& ckpt_path) {
  namespace fs = std::filesystem;
  const fs::path path(ckpt_path);
  std::ifstream in(path.parent_path() / "config.json");
  if (!in) {
    throw std::runtime_error("missing config.json beside checkpoint " + ckpt_path);
  }
  nlohmann::json j;
  in >> j;
  ModelConfig cfg = config_from_json(j.at("model"));
  Model model(cfg, 0);
  restore(&model.params(), load_checkpoint(ckpt_path));
  Vocab vocab = Vocab::load((path.parent_path() / "vocab.txt").string());
  return {std::move(model), std::move(vocab)};
}

}  // namespace dtx
