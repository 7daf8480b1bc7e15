#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tracer/encoder.hpp"
#include "tracer/tokenizer.hpp"

namespace tracer {

enum class Architecture { Single, Twin, Siamese };

std::string_view to_string(Architecture arch);
/// Accepts "single", "twin", "siamese" (any case). Throws ConfigError.
Architecture parse_architecture(std::string_view name);

enum class Side { NL, PL };

/// linear(in → hidden) → tanh → dropout → linear(hidden → 2).
template <typename T>
struct HeadParams {
  Matrix<T> w1, b1, w2, b2;

  static HeadParams init(std::size_t in, std::size_t hidden, std::uint64_t seed);
  static HeadParams zeros(std::size_t in, std::size_t hidden);

  template <typename Fn>
  void visit(Fn&& fn) {
    fn(std::string("head.w1"), w1);
    fn(std::string("head.b1"), b1);
    fn(std::string("head.w2"), w2);
    fn(std::string("head.b2"), b2);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<HeadParams*>(this)->visit(
        [&](const std::string& name, Matrix<T>& m) { fn(name, static_cast<const Matrix<T>&>(m)); });
  }
  bool operator==(const HeadParams&) const = default;
};

/// Encoder(s) plus classification head. TWIN owns a second encoder for the
/// PL side; SINGLE and SIAMESE use encoder_a for everything.
template <typename T>
struct RelModel {
  Architecture architecture = Architecture::Siamese;
  EncoderParams<T> encoder_a;
  std::optional<EncoderParams<T>> encoder_b;
  HeadParams<T> head;
  /// Token budget of every encoder input: one artifact for TWIN/SIAMESE,
  /// the joined pair for SINGLE.
  std::size_t seq_len = 64;
  /// Set when the weights were carried over from an earlier phase.
  bool transferred = false;

  static RelModel init(Architecture arch, const EncoderConfig& config, std::size_t seq_len,
                       std::uint64_t seed);
  /// Starts every encoder from `pretrained`; the head is freshly initialized.
  static RelModel from_encoder(Architecture arch, const EncoderParams<T>& pretrained,
                               std::size_t seq_len, std::uint64_t seed);
  /// Zero tensors with the same layout, for gradient buffers.
  static RelModel zeros_like(const RelModel& model);

  std::size_t dim() const noexcept { return encoder_a.config.dim; }
  std::size_t head_input() const noexcept {
    return architecture == Architecture::Single ? dim() : 3 * dim();
  }
  const EncoderParams<T>& encoder_for(Side side) const;
  /// Throws ValidationError when the layout breaks an architecture rule.
  void validate() const;

  /// Every tensor, names prefixed "encoder_a.", "encoder_b." or "head.".
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;
  std::vector<std::pair<std::string, Matrix<T>*>> named_tensors();
  /// Tensors updated during relation training (MLM projection excluded).
  std::vector<std::pair<std::string, Matrix<T>*>> trainable_tensors();

  template <typename U>
  RelModel<U> cast() const;

  bool operator==(const RelModel&) const = default;
};

/// [u ; v ; |u − v|].
template <typename T>
FeatureVector<T> join_features(const FeatureVector<T>& u, const FeatureVector<T>& v);

/// Positive-class softmax probability of a 1×2 logit row.
template <typename T>
T positive_probability(const Matrix<T>& logits);

/// Eval-mode pooled representation of one artifact. Throws
/// UnsupportedArchitecture for SINGLE.
template <typename T>
FeatureVector<T> embed(const RelModel<T>& model, std::span<const int> body, Side side);

/// Eval-mode relatedness score in [0, 1].
template <typename T>
T score_pair(const RelModel<T>& model, std::span<const int> nl, std::span<const int> pl);

/// Head applied to cached embeddings; equals score_pair bitwise.
template <typename T>
T score_embedded(const RelModel<T>& model, const FeatureVector<T>& u, const FeatureVector<T>& v);

/// Two-class cross-entropy of one labelled pair. When grads is non-null the
/// gradient, scaled by grad_scale, is accumulated into it.
template <typename T>
T example_loss(const RelModel<T>& model, std::span<const int> nl, std::span<const int> pl,
               int label, RelModel<T>* grads = nullptr, bool train_mode = false,
               Rng* rng = nullptr, T grad_scale = T(1));

/// Eval-mode scoring with an encoder-invocation counter. TWIN and SIAMESE
/// grids embed each artifact once; SINGLE runs one pass per pair.
class RelScorer {
 public:
  explicit RelScorer(const RelModel<float>& model) : model_(model) {}

  const RelModel<float>& model() const noexcept { return model_; }
  FeatureVector<float> embed(std::span<const int> body, Side side) const;
  float score(std::span<const int> nl, std::span<const int> pl) const;
  float score_embedded(const FeatureVector<float>& u, const FeatureVector<float>& v) const;
  /// Scores every (source, target) pair; rows follow sources.
  Matrix<float> score_grid(std::span<const std::vector<int>> sources,
                           std::span<const std::vector<int>> targets) const;

  std::uint64_t encoder_calls() const noexcept { return calls_.load(); }
  void reset_calls() noexcept { calls_.store(0); }

 private:
  const RelModel<float>& model_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Copies every weight into a model flagged as transferred. Throws
/// ValidationError when `target` differs from the source architecture.
RelModel<float> transfer(const RelModel<float>& from, Architecture target);

struct ModelBundle {
  RelModel<float> model;
  Vocab vocab;
  nlohmann::json manifest;
};

/// Writes manifest.json, vocab.txt, encoder_a.ckpt, encoder_b.ckpt (TWIN)
/// and head.ckpt into `dir`. `extra` is merged into the manifest.
void save_model_bundle(const RelModel<float>& model, const Vocab& vocab,
                       const std::filesystem::path& dir, const nlohmann::json& extra = {});
/// Throws ValidationError when the vocabulary hash or architecture does not
/// match the manifest.
ModelBundle load_model_bundle(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

template <typename T>
template <typename Fn>
void RelModel<T>::visit(Fn&& fn) {
  encoder_a.visit([&](const std::string& name, Matrix<T>& m) { fn("encoder_a." + name, m); });
  if (encoder_b) {
    encoder_b->visit([&](const std::string& name, Matrix<T>& m) { fn("encoder_b." + name, m); });
  }
  head.visit(fn);
}

template <typename T>
template <typename Fn>
void RelModel<T>::visit(Fn&& fn) const {
  const_cast<RelModel*>(this)->visit(
      [&](const std::string& name, Matrix<T>& m) { fn(name, static_cast<const Matrix<T>&>(m)); });
}

template <typename T>
template <typename U>
RelModel<U> RelModel<T>::cast() const {
  RelModel<U> out;
  out.architecture = architecture;
  out.encoder_a = encoder_a.template cast<U>();
  if (encoder_b) out.encoder_b = encoder_b->template cast<U>();
  out.head.w1 = head.w1.template cast<U>();
  out.head.b1 = head.b1.template cast<U>();
  out.head.w2 = head.w2.template cast<U>();
  out.head.b2 = head.b2.template cast<U>();
  out.seq_len = seq_len;
  out.transferred = transferred;
  return out;
}

}  // namespace tracer
