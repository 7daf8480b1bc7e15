#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tracer/kernels.hpp"
#include "tracer/matrix.hpp"
#include "tracer/rng.hpp"
#include "tracer/tokenizer.hpp"

namespace tracer {

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t dim = 128;
  std::size_t ff_dim = 512;
  std::size_t max_positions = 256;
  std::size_t vocab_size = 8000;
  double dropout = 0.1;
  /// Standard deviation of the normal initializer for weight matrices.
  double init_range = 0.02;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

template <typename T>
struct LayerParams {
  Matrix<T> ln1_gamma, ln1_beta;
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln2_gamma, ln2_beta;
  Matrix<T> w1, b1, w2, b2;
  bool operator==(const LayerParams&) const = default;
};

/// Trainable state of a pre-norm transformer encoder with learned absolute
/// position embeddings, segment embeddings and an MLM output projection.
template <typename T>
struct EncoderParams {
  EncoderConfig config;
  Matrix<T> token_embedding;     // vocab × d
  Matrix<T> position_embedding;  // max_positions × d
  Matrix<T> segment_embedding;   // 2 × d
  std::vector<LayerParams<T>> layers;
  Matrix<T> final_gamma, final_beta;
  Matrix<T> mlm_weight;  // d × vocab
  Matrix<T> mlm_bias;    // 1 × vocab

  /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  /// Same shapes, all zeros. Used for gradient buffers.
  static EncoderParams zeros(const EncoderConfig& config);

  /// Calls fn(name, tensor) for every parameter tensor in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;

  std::vector<std::pair<std::string, Matrix<T>*>> named_tensors();
  std::size_t parameter_count() const;

  template <typename U>
  EncoderParams<U> cast() const;

  bool operator==(const EncoderParams&) const = default;
};

/// Final-layer token vectors, one row per position.
template <typename T>
using HiddenStates = Matrix<T>;

/// Pooled 1×d artifact representation.
template <typename T>
using FeatureVector = Matrix<T>;

template <typename T>
struct LayerTape {
  Matrix<T> x_in;
  kernels::LayerNormCache<T> ln1;
  Matrix<T> normed1, q, k, v, context;
  std::vector<Matrix<T>> probs;
  Matrix<T> attn_keep;  // dropout scale per element; empty when inactive
  Matrix<T> x_mid;
  kernels::LayerNormCache<T> ln2;
  Matrix<T> normed2, pre_act, act;
  Matrix<T> ff_keep;
};

/// Intermediate values recorded by forward() for backward().
template <typename T>
struct EncoderTape {
  TokenSequence seq;
  Matrix<T> embed_keep;
  std::vector<LayerTape<T>> layers;
  kernels::LayerNormCache<T> final_ln;
  Matrix<T> output;
};

/// Runs the encoder over `seq`. Dropout is applied only when train_mode is
/// set, drawing masks from `rng`. Pass a tape to enable backward().
template <typename T>
HiddenStates<T> forward(const EncoderParams<T>& params, const TokenSequence& seq,
                        bool train_mode = false, Rng* rng = nullptr,
                        EncoderTape<T>* tape = nullptr);

/// Backpropagates d_hidden (seq_len × d) through a recorded forward pass and
/// accumulates parameter gradients into `grads`. The MLM projection is not
/// touched.
template <typename T>
void backward(const EncoderParams<T>& params, const EncoderTape<T>& tape,
              const Matrix<T>& d_hidden, EncoderParams<T>& grads);

/// Mean of the rows whose mask entry is 1.
template <typename T>
FeatureVector<T> pool(const HiddenStates<T>& hidden, std::span<const int> mask);

/// Gradient of pool() with respect to the hidden states.
template <typename T>
Matrix<T> pool_backward(const FeatureVector<T>& d_pooled, std::span<const int> mask);

template <typename T>
struct MlmResult {
  T loss;
  std::size_t labeled;
};

/// Mean cross-entropy of the MLM projection over labeled positions. When
/// grads is non-null, the full gradient (projection and encoder stack) is
/// accumulated into it, scaled by `grad_scale`.
template <typename T>
MlmResult<T> mlm_loss(const EncoderParams<T>& params, const MaskedSequence& masked,
                      EncoderParams<T>* grads = nullptr, bool train_mode = false,
                      Rng* rng = nullptr, T grad_scale = T(1));

struct PretrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double mask_rate = 0.15;
  std::uint64_t seed = 0;
  /// Called every step with (step, loss); optional.
  std::function<void(std::size_t, double)> on_step;
};

struct PretrainResult {
  EncoderParams<float> params;
  std::vector<double> loss_history;  ///< one entry per optimizer step
};

/// Masked-language-model pretraining with Adam and linear decay. Throws
/// NumericalError if the loss becomes NaN.
PretrainResult pretrain_mlm(const std::vector<TokenSequence>& corpus, const EncoderConfig& config,
                            const PretrainConfig& train);

/// Binary tensor container: magic, version, JSON header (config + tensor
/// table), then little-endian float32 payload.
void save_encoder(const EncoderParams<float>& params, const std::filesystem::path& file);
EncoderParams<float> load_encoder(const std::filesystem::path& file);

// ---------------------------------------------------------------------------

template <typename T>
template <typename Fn>
void EncoderParams<T>::visit(Fn&& fn) {
  fn(std::string("embeddings.token"), token_embedding);
  fn(std::string("embeddings.position"), position_embedding);
  fn(std::string("embeddings.segment"), segment_embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    const std::string pre = "layer." + std::to_string(l) + ".";
    fn(pre + "ln1.gamma", p.ln1_gamma);
    fn(pre + "ln1.beta", p.ln1_beta);
    fn(pre + "attn.wq", p.wq);
    fn(pre + "attn.bq", p.bq);
    fn(pre + "attn.wk", p.wk);
    fn(pre + "attn.bk", p.bk);
    fn(pre + "attn.wv", p.wv);
    fn(pre + "attn.bv", p.bv);
    fn(pre + "attn.wo", p.wo);
    fn(pre + "attn.bo", p.bo);
    fn(pre + "ln2.gamma", p.ln2_gamma);
    fn(pre + "ln2.beta", p.ln2_beta);
    fn(pre + "ffn.w1", p.w1);
    fn(pre + "ffn.b1", p.b1);
    fn(pre + "ffn.w2", p.w2);
    fn(pre + "ffn.b2", p.b2);
  }
  fn(std::string("final_norm.gamma"), final_gamma);
  fn(std::string("final_norm.beta"), final_beta);
  fn(std::string("mlm.weight"), mlm_weight);
  fn(std::string("mlm.bias"), mlm_bias);
}

template <typename T>
template <typename Fn>
void EncoderParams<T>::visit(Fn&& fn) const {
  const_cast<EncoderParams<T>*>(this)->visit(
      [&](const std::string& name, Matrix<T>& m) { fn(name, static_cast<const Matrix<T>&>(m)); });
}

template <typename T>
template <typename U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> out = EncoderParams<U>::zeros(config);
  std::vector<const Matrix<T>*> src;
  visit([&](const std::string&, const Matrix<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
  return out;
}

}  // namespace tracer
