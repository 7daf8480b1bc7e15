#include "tracer/encoder.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "tracer/error.hpp"
#include "tracer/optim.hpp"
#include "tracer/tensor_io.hpp"

namespace tracer {

using nlohmann::json;
namespace k = kernels;

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder: layers must be positive");
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ConfigError("encoder: dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (ff_dim == 0) throw ConfigError("encoder: ff_dim must be positive");
  if (max_positions < 3) throw ConfigError("encoder: max_positions must be at least 3");
  if (vocab_size <= static_cast<std::size_t>(kNumSpecialTokens)) {
    throw ConfigError("encoder: vocab_size must exceed the special tokens");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0, 1)");
  if (!(init_range > 0.0)) throw ConfigError("encoder: init_range must be positive");
}

json to_json(const EncoderConfig& c) {
  return {{"layers", c.layers},         {"heads", c.heads},
          {"dim", c.dim},               {"ff_dim", c.ff_dim},
          {"max_positions", c.max_positions}, {"vocab_size", c.vocab_size},
          {"dropout", c.dropout},       {"init_range", c.init_range}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.init_range = j.value("init_range", 0.02);
  c.validate();
  return c;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::zeros(const EncoderConfig& config) {
  config.validate();
  const std::size_t d = config.dim, f = config.ff_dim, v = config.vocab_size;
  EncoderParams p;
  p.config = config;
  p.token_embedding = Matrix<T>(v, d);
  p.position_embedding = Matrix<T>(config.max_positions, d);
  p.segment_embedding = Matrix<T>(2, d);
  p.layers.resize(config.layers);
  for (auto& l : p.layers) {
    l.ln1_gamma = Matrix<T>(1, d);
    l.ln1_beta = Matrix<T>(1, d);
    l.wq = Matrix<T>(d, d);
    l.bq = Matrix<T>(1, d);
    l.wk = Matrix<T>(d, d);
    l.bk = Matrix<T>(1, d);
    l.wv = Matrix<T>(d, d);
    l.bv = Matrix<T>(1, d);
    l.wo = Matrix<T>(d, d);
    l.bo = Matrix<T>(1, d);
    l.ln2_gamma = Matrix<T>(1, d);
    l.ln2_beta = Matrix<T>(1, d);
    l.w1 = Matrix<T>(d, f);
    l.b1 = Matrix<T>(1, f);
    l.w2 = Matrix<T>(f, d);
    l.b2 = Matrix<T>(1, d);
  }
  p.final_gamma = Matrix<T>(1, d);
  p.final_beta = Matrix<T>(1, d);
  p.mlm_weight = Matrix<T>(d, v);
  p.mlm_bias = Matrix<T>(1, v);
  return p;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::init(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams p = zeros(config);
  Rng rng(seed);
  p.visit([&](const std::string& name, Matrix<T>& m) {
    if (name.ends_with("gamma")) {
      m.fill(T(1));
    } else if (m.rows() > 1) {
      for (auto& x : m.flat()) x = static_cast<T>(config.init_range * rng.normal());
    }
  });
  return p;
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> EncoderParams<T>::named_tensors() {
  std::vector<std::pair<std::string, Matrix<T>*>> out;
  visit([&](const std::string& name, Matrix<T>& m) { out.emplace_back(name, &m); });
  return out;
}

template <typename T>
std::size_t EncoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

namespace {

template <typename T>
Matrix<T> dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  Matrix<T> keep(rows, cols);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& x : keep.flat()) x = rng.bernoulli(rate) ? T(0) : scale;
  return keep;
}

template <typename T>
void multiply_in_place(Matrix<T>& x, const Matrix<T>& keep) {
  if (keep.empty()) return;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= keep[i];
}

template <typename T>
void add_in_place(Matrix<T>& x, const Matrix<T>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

template <typename T>
void linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b, Matrix<T>& y) {
  k::matmul(x, w, y);
  k::add_row_vector(y, b);
}

// dX += dY·Wᵀ; dW += Xᵀ·dY; db += colsum(dY)
template <typename T>
void linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dy, Matrix<T>& dx,
                     Matrix<T>& dw, Matrix<T>& db, bool accumulate_dx) {
  k::matmul_tn(x, dy, dw, true);
  k::accumulate_column_sums(dy, db);
  k::matmul_nt(dy, w, dx, accumulate_dx);
}

}  // namespace

template <typename T>
HiddenStates<T> forward(const EncoderParams<T>& params, const TokenSequence& seq, bool train_mode,
                        Rng* rng, EncoderTape<T>* tape) {
  const auto& cfg = params.config;
  const std::size_t n = seq.length(), d = cfg.dim;
  if (n == 0 || n > cfg.max_positions) {
    throw ValidationError("encoder: sequence length " + std::to_string(n) + " outside [1, " +
                          std::to_string(cfg.max_positions) + "]");
  }
  if (seq.attention_mask.size() != n || seq.segment_ids.size() != n) {
    throw ValidationError("encoder: token sequence fields differ in length");
  }
  if (params.token_embedding.rows() != cfg.vocab_size || params.token_embedding.cols() != d ||
      params.layers.size() != cfg.layers) {
    throw ValidationError("encoder: parameters do not match config");
  }
  const bool dropout = train_mode && cfg.dropout > 0.0;
  if (dropout && rng == nullptr) throw ValidationError("encoder: train mode needs an rng");

  Matrix<T> x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const int id = seq.ids[i];
    const int s = seq.segment_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size || s < 0 || s > 1) {
      throw ValidationError("encoder: token or segment id out of range");
    }
    auto xr = x.row(i);
    auto te = params.token_embedding.row(id);
    auto pe = params.position_embedding.row(i);
    auto se = params.segment_embedding.row(s);
    for (std::size_t j = 0; j < d; ++j) xr[j] = te[j] + pe[j] + se[j];
  }
  Matrix<T> embed_keep;
  if (dropout) {
    embed_keep = dropout_mask<T>(n, d, cfg.dropout, *rng);
    multiply_in_place(x, embed_keep);
  }

  std::vector<LayerTape<T>> local_layers;
  std::vector<LayerTape<T>>& layers = tape ? tape->layers : local_layers;
  layers.assign(cfg.layers, LayerTape<T>{});

  Matrix<T> attn_out, ff_out;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& p = params.layers[l];
    auto& t = layers[l];
    t.x_in = x;
    k::layer_norm(x, p.ln1_gamma, p.ln1_beta, t.normed1, t.ln1);
    linear(t.normed1, p.wq, p.bq, t.q);
    linear(t.normed1, p.wk, p.bk, t.k);
    linear(t.normed1, p.wv, p.bv, t.v);
    k::attention(t.q, t.k, t.v, std::span<const int>(seq.attention_mask), cfg.heads, t.context, t.probs);
    linear(t.context, p.wo, p.bo, attn_out);
    if (dropout) {
      t.attn_keep = dropout_mask<T>(n, d, cfg.dropout, *rng);
      multiply_in_place(attn_out, t.attn_keep);
    }
    add_in_place(x, attn_out);
    t.x_mid = x;
    k::layer_norm(x, p.ln2_gamma, p.ln2_beta, t.normed2, t.ln2);
    linear(t.normed2, p.w1, p.b1, t.pre_act);
    k::gelu(t.pre_act, t.act);
    linear(t.act, p.w2, p.b2, ff_out);
    if (dropout) {
      t.ff_keep = dropout_mask<T>(n, d, cfg.dropout, *rng);
      multiply_in_place(ff_out, t.ff_keep);
    }
    add_in_place(x, ff_out);
  }

  Matrix<T> y;
  kernels::LayerNormCache<T> final_ln;
  k::layer_norm(x, params.final_gamma, params.final_beta, y, final_ln);
  if (tape) {
    tape->seq = seq;
    tape->embed_keep = std::move(embed_keep);
    tape->final_ln = std::move(final_ln);
    tape->output = y;
  }
  return y;
}

template <typename T>
void backward(const EncoderParams<T>& params, const EncoderTape<T>& tape,
              const Matrix<T>& d_hidden, EncoderParams<T>& grads) {
  const auto& cfg = params.config;
  const std::size_t n = tape.seq.length(), d = cfg.dim;
  if (d_hidden.rows() != n || d_hidden.cols() != d) {
    throw ValidationError("encoder backward: gradient shape mismatch");
  }
  Matrix<T> dx;
  k::layer_norm_backward(d_hidden, params.final_gamma, tape.final_ln, dx, grads.final_gamma,
                         grads.final_beta);

  Matrix<T> d_branch, d_act, d_pre, d_normed, d_ln, d_context, dq, dk, dv;
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const auto& p = params.layers[l];
    auto& g = grads.layers[l];
    const auto& t = tape.layers[l];

    // Feed-forward block: x_out = x_mid + drop(W2·gelu(W1·LN2(x_mid)))
    d_branch = dx;
    multiply_in_place(d_branch, t.ff_keep);
    linear_backward(t.act, p.w2, d_branch, d_act, g.w2, g.b2, false);
    k::gelu_backward(t.pre_act, d_act, d_pre);
    linear_backward(t.normed2, p.w1, d_pre, d_normed, g.w1, g.b1, false);
    k::layer_norm_backward(d_normed, p.ln2_gamma, t.ln2, d_ln, g.ln2_gamma, g.ln2_beta);
    add_in_place(dx, d_ln);

    // Attention block: x_mid = x_in + drop(Wo·attn(LN1(x_in)))
    d_branch = dx;
    multiply_in_place(d_branch, t.attn_keep);
    linear_backward(t.context, p.wo, d_branch, d_context, g.wo, g.bo, false);
    k::attention_backward(t.q, t.k, t.v, cfg.heads, t.probs, d_context, dq, dk, dv);
    linear_backward(t.normed1, p.wq, dq, d_normed, g.wq, g.bq, false);
    linear_backward(t.normed1, p.wk, dk, d_normed, g.wk, g.bk, true);
    linear_backward(t.normed1, p.wv, dv, d_normed, g.wv, g.bv, true);
    k::layer_norm_backward(d_normed, p.ln1_gamma, t.ln1, d_ln, g.ln1_gamma, g.ln1_beta);
    add_in_place(dx, d_ln);
  }

  multiply_in_place(dx, tape.embed_keep);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = dx.row(i);
    auto te = grads.token_embedding.row(tape.seq.ids[i]);
    auto pe = grads.position_embedding.row(i);
    auto se = grads.segment_embedding.row(tape.seq.segment_ids[i]);
    for (std::size_t j = 0; j < d; ++j) {
      te[j] += src[j];
      pe[j] += src[j];
      se[j] += src[j];
    }
  }
}

template <typename T>
FeatureVector<T> pool(const HiddenStates<T>& hidden, std::span<const int> mask) {
  if (mask.size() != hidden.rows()) throw ValidationError("pool: mask length mismatch");
  FeatureVector<T> out(1, hidden.cols());
  std::size_t count = 0;
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    if (!mask[i]) continue;
    ++count;
    auto r = hidden.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
  if (count == 0) throw ValidationError("pool: every position is padding");
  for (auto& x : out.flat()) x /= static_cast<T>(count);
  return out;
}

template <typename T>
Matrix<T> pool_backward(const FeatureVector<T>& d_pooled, std::span<const int> mask) {
  const std::size_t count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  if (count == 0) throw ValidationError("pool: every position is padding");
  Matrix<T> d(mask.size(), d_pooled.cols());
  const T inv = T(1) / static_cast<T>(count);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    auto r = d.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = d_pooled[j] * inv;
  }
  return d;
}

template <typename T>
MlmResult<T> mlm_loss(const EncoderParams<T>& params, const MaskedSequence& masked,
                      EncoderParams<T>* grads, bool train_mode, Rng* rng, T grad_scale) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < masked.labels.size(); ++i) {
    if (masked.labels[i] != kNoLabel) positions.push_back(i);
  }
  if (positions.empty()) throw ValidationError("mlm_loss: no labeled positions");

  EncoderTape<T> tape;
  const auto hidden = forward(params, masked.seq, train_mode, rng, grads ? &tape : nullptr);
  const std::size_t m = positions.size(), d = params.config.dim, v = params.config.vocab_size;
  Matrix<T> selected(m, d);
  for (std::size_t r = 0; r < m; ++r) {
    auto src = hidden.row(positions[r]);
    std::copy(src.begin(), src.end(), selected.row(r).begin());
  }
  Matrix<T> logits;
  linear(selected, params.mlm_weight, params.mlm_bias, logits);

  T loss = 0;
  Matrix<T> d_logits(m, v);
  for (std::size_t r = 0; r < m; ++r) {
    auto z = logits.row(r);
    const T maxv = *std::max_element(z.begin(), z.end());
    T total = 0;
    for (T val : z) total += std::exp(val - maxv);
    const T log_norm = maxv + std::log(total);
    const int label = masked.labels[positions[r]];
    loss += log_norm - z[label];
    auto dz = d_logits.row(r);
    for (std::size_t c = 0; c < v; ++c) dz[c] = std::exp(z[c] - log_norm) / static_cast<T>(m);
    dz[label] -= T(1) / static_cast<T>(m);
  }
  loss /= static_cast<T>(m);

  if (grads) {
    for (auto& x : d_logits.flat()) x *= grad_scale;
    Matrix<T> d_selected;
    linear_backward(selected, params.mlm_weight, d_logits, d_selected, grads->mlm_weight,
                    grads->mlm_bias, false);
    Matrix<T> d_hidden(hidden.rows(), d);
    for (std::size_t r = 0; r < m; ++r) {
      auto src = d_selected.row(r);
      std::copy(src.begin(), src.end(), d_hidden.row(positions[r]).begin());
    }
    backward(params, tape, d_hidden, *grads);
  }
  return {loss, m};
}

PretrainResult pretrain_mlm(const std::vector<TokenSequence>& corpus, const EncoderConfig& config,
                            const PretrainConfig& train) {
  if (corpus.empty()) throw ValidationError("pretrain_mlm: empty corpus");
  if (train.steps == 0 || train.batch_size == 0) throw ConfigError("pretrain_mlm: zero steps or batch");
  PretrainResult result{EncoderParams<float>::init(config, mix_seed(train.seed, 1)), {}};
  auto grads = EncoderParams<float>::zeros(config);
  auto params_list = result.params.named_tensors();
  auto grads_list = grads.named_tensors();
  std::vector<Matrix<float>*> p_ptrs, g_mut;
  std::vector<const Matrix<float>*> g_ptrs;
  for (auto& [n, m] : params_list) p_ptrs.push_back(m);
  for (auto& [n, m] : grads_list) {
    g_ptrs.push_back(m);
    g_mut.push_back(m);
  }
  auto adam = make_adam_state<float>(std::span<Matrix<float>* const>(p_ptrs));

  Rng order_rng(mix_seed(train.seed, 2));
  Rng dropout_rng(mix_seed(train.seed, 3));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::uint64_t mask_counter = 0;

  for (std::size_t step = 0; step < train.steps; ++step) {
    for (auto* g : g_mut) g->fill(0.0f);
    std::vector<MaskedSequence> batch;
    while (batch.size() < train.batch_size) {
      if (cursor == order.size()) {
        order_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const auto& seq = corpus[order[cursor++]];
      auto masked = mask_tokens(seq, config.vocab_size, train.mask_rate,
                                mix_seed(train.seed, 1000 + mask_counter++));
      if (std::count_if(masked.labels.begin(), masked.labels.end(),
                        [](int l) { return l != kNoLabel; }) == 0) {
        continue;
      }
      batch.push_back(std::move(masked));
    }
    double loss = 0.0;
    const float scale = 1.0f / static_cast<float>(batch.size());
    for (const auto& ms : batch) {
      loss += mlm_loss<float>(result.params, ms, &grads, true, &dropout_rng, scale).loss;
    }
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss)) {
      throw NumericalError("pretrain_mlm: loss became " + std::to_string(loss) + " at step " +
                           std::to_string(step));
    }
    result.loss_history.push_back(loss);
    if (train.on_step) train.on_step(step, loss);
    adam_step<float>(std::span<Matrix<float>* const>(p_ptrs),
                     std::span<const Matrix<float>* const>(g_ptrs), adam,
                     lr_at(step, train.steps, train.lr));
  }
  return result;
}

void save_encoder(const EncoderParams<float>& params, const std::filesystem::path& file) {
  std::vector<std::pair<std::string, const Matrix<float>*>> tensors;
  params.visit([&](const std::string& name, const Matrix<float>& m) { tensors.emplace_back(name, &m); });
  save_tensors(file, "encoder", {{"config", to_json(params.config)}}, tensors);
}

EncoderParams<float> load_encoder(const std::filesystem::path& file) {
  const auto stored = load_tensors(file);
  if (stored.kind != "encoder") throw ValidationError(file.string() + ": not an encoder checkpoint");
  EncoderConfig config;
  try {
    config = encoder_config_from_json(stored.meta.at("config"));
  } catch (const json::exception& e) {
    throw ParseError(file.string(), 1, e.what());
  }
  auto params = EncoderParams<float>::zeros(config);
  assign_tensors(stored, params.named_tensors());
  return params;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;

#define TRACER_INSTANTIATE(T)                                                                     \
  template HiddenStates<T> forward<T>(const EncoderParams<T>&, const TokenSequence&, bool, Rng*,  \
                                      EncoderTape<T>*);                                           \
  template void backward<T>(const EncoderParams<T>&, const EncoderTape<T>&, const Matrix<T>&,     \
                            EncoderParams<T>&);                                                   \
  template FeatureVector<T> pool<T>(const HiddenStates<T>&, std::span<const int>);                \
  template Matrix<T> pool_backward<T>(const FeatureVector<T>&, std::span<const int>);             \
  template MlmResult<T> mlm_loss<T>(const EncoderParams<T>&, const MaskedSequence&,               \
                                    EncoderParams<T>*, bool, Rng*, T);

TRACER_INSTANTIATE(float)
TRACER_INSTANTIATE(double)

}  // namespace tracer
