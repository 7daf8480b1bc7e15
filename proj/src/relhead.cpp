#include "tracer/relhead.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "tracer/error.hpp"
#include "tracer/tensor_io.hpp"

namespace tracer {

using nlohmann::json;
namespace k = kernels;

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::Single: return "single";
    case Architecture::Twin: return "twin";
    case Architecture::Siamese: return "siamese";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "single") return Architecture::Single;
  if (lower == "twin") return Architecture::Twin;
  if (lower == "siamese") return Architecture::Siamese;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected single, twin or siamese)");
}

template <typename T>
HeadParams<T> HeadParams<T>::zeros(std::size_t in, std::size_t hidden) {
  return {Matrix<T>(in, hidden), Matrix<T>(1, hidden), Matrix<T>(hidden, 2), Matrix<T>(1, 2)};
}

template <typename T>
HeadParams<T> HeadParams<T>::init(std::size_t in, std::size_t hidden, std::uint64_t seed) {
  auto h = zeros(in, hidden);
  Rng rng(seed);
  const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& x : h.w1.flat()) x = static_cast<T>(b1 * (2.0 * rng.uniform() - 1.0));
  for (auto& x : h.w2.flat()) x = static_cast<T>(b2 * (2.0 * rng.uniform() - 1.0));
  return h;
}

template <typename T>
RelModel<T> RelModel<T>::init(Architecture arch, const EncoderConfig& config, std::size_t seq_len,
                              std::uint64_t seed) {
  return from_encoder(arch, EncoderParams<T>::init(config, mix_seed(seed, 11)), seq_len, seed);
}

template <typename T>
RelModel<T> RelModel<T>::from_encoder(Architecture arch, const EncoderParams<T>& pretrained,
                                      std::size_t seq_len, std::uint64_t seed) {
  RelModel m;
  m.architecture = arch;
  m.encoder_a = pretrained;
  if (arch == Architecture::Twin) m.encoder_b = pretrained;
  m.seq_len = seq_len;
  m.head = HeadParams<T>::init(m.head_input(), m.dim(), mix_seed(seed, 12));
  m.validate();
  return m;
}

template <typename T>
RelModel<T> RelModel<T>::zeros_like(const RelModel& model) {
  RelModel g;
  g.architecture = model.architecture;
  g.encoder_a = EncoderParams<T>::zeros(model.encoder_a.config);
  if (model.encoder_b) g.encoder_b = EncoderParams<T>::zeros(model.encoder_b->config);
  g.head = HeadParams<T>::zeros(model.head_input(), model.dim());
  g.seq_len = model.seq_len;
  return g;
}

template <typename T>
const EncoderParams<T>& RelModel<T>::encoder_for(Side side) const {
  if (side == Side::PL && architecture == Architecture::Twin) return *encoder_b;
  return encoder_a;
}

template <typename T>
void RelModel<T>::validate() const {
  if (architecture == Architecture::Twin) {
    if (!encoder_b) throw ValidationError("twin model needs two encoders");
    if (!(encoder_b->config == encoder_a.config)) {
      throw ValidationError("twin encoders must share a configuration");
    }
  } else if (encoder_b) {
    throw ValidationError(std::string(to_string(architecture)) + " model must have exactly one encoder");
  }
  if (head.w1.rows() != head_input() || head.w1.cols() != dim() || head.w2.rows() != dim() ||
      head.w2.cols() != 2) {
    throw ValidationError("classification head does not match encoder width");
  }
  const std::size_t needed = architecture == Architecture::Single ? 5 : 3;
  if (seq_len < needed || seq_len > encoder_a.config.max_positions) {
    throw ValidationError("seq_len " + std::to_string(seq_len) + " outside [" + std::to_string(needed) +
                          ", max_positions]");
  }
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> RelModel<T>::named_tensors() {
  std::vector<std::pair<std::string, Matrix<T>*>> out;
  visit([&](const std::string& name, Matrix<T>& m) { out.emplace_back(name, &m); });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> RelModel<T>::trainable_tensors() {
  auto all = named_tensors();
  std::erase_if(all, [](const auto& e) { return e.first.find(".mlm.") != std::string::npos; });
  return all;
}

template <typename T>
FeatureVector<T> join_features(const FeatureVector<T>& u, const FeatureVector<T>& v) {
  if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols()) {
    throw ValidationError("join_features: vectors differ in dimension");
  }
  const std::size_t d = u.cols();
  FeatureVector<T> out(1, 3 * d);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = u[j];
    out[d + j] = v[j];
    out[2 * d + j] = std::abs(u[j] - v[j]);
  }
  return out;
}

template <typename T>
T positive_probability(const Matrix<T>& logits) {
  const T m = std::max(logits[0], logits[1]);
  const T e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return e1 / (e0 + e1);
}

namespace {

template <typename T>
struct HeadCache {
  Matrix<T> input, act, keep, dropped;
};

template <typename T>
Matrix<T> head_forward(const HeadParams<T>& h, const Matrix<T>& x, bool train, double dropout,
                       Rng* rng, HeadCache<T>* cache) {
  Matrix<T> z;
  k::matmul(x, h.w1, z);
  k::add_row_vector(z, h.b1);
  for (auto& val : z.flat()) val = std::tanh(val);
  Matrix<T> dropped = z;
  Matrix<T> keep;
  if (train && dropout > 0.0) {
    keep = Matrix<T>(z.rows(), z.cols());
    const T scale = static_cast<T>(1.0 / (1.0 - dropout));
    for (auto& val : keep.flat()) val = rng->bernoulli(dropout) ? T(0) : scale;
    for (std::size_t i = 0; i < dropped.size(); ++i) dropped[i] *= keep[i];
  }
  Matrix<T> logits;
  k::matmul(dropped, h.w2, logits);
  k::add_row_vector(logits, h.b2);
  if (cache) *cache = {x, std::move(z), std::move(keep), std::move(dropped)};
  return logits;
}

// Returns d(input); parameter gradients accumulate into g.
template <typename T>
Matrix<T> head_backward(const HeadParams<T>& h, const HeadCache<T>& c, const Matrix<T>& d_logits,
                        HeadParams<T>& g) {
  k::matmul_tn(c.dropped, d_logits, g.w2, true);
  k::accumulate_column_sums(d_logits, g.b2);
  Matrix<T> d_act;
  k::matmul_nt(d_logits, h.w2, d_act);
  for (std::size_t i = 0; i < d_act.size(); ++i) {
    if (!c.keep.empty()) d_act[i] *= c.keep[i];
    d_act[i] *= T(1) - c.act[i] * c.act[i];
  }
  k::matmul_tn(c.input, d_act, g.w1, true);
  k::accumulate_column_sums(d_act, g.b1);
  Matrix<T> d_input;
  k::matmul_nt(d_act, h.w1, d_input);
  return d_input;
}

TokenSequence single_input(std::span<const int> nl, std::span<const int> pl, std::size_t len) {
  return trim_padding(encode_pair_ids(nl, pl, len));
}

TokenSequence side_input(std::span<const int> body, std::size_t len) {
  return trim_padding(encode_ids(body, len));
}

template <typename T>
FeatureVector<T> encode_and_pool(const EncoderParams<T>& enc, const TokenSequence& seq) {
  return pool(forward(enc, seq), std::span<const int>(seq.attention_mask));
}

}  // namespace

template <typename T>
FeatureVector<T> embed(const RelModel<T>& model, std::span<const int> body, Side side) {
  if (model.architecture == Architecture::Single) {
    throw UnsupportedArchitecture("embed: single-encoder models score joint pairs only");
  }
  return encode_and_pool(model.encoder_for(side), side_input(body, model.seq_len));
}

template <typename T>
T score_embedded(const RelModel<T>& model, const FeatureVector<T>& u, const FeatureVector<T>& v) {
  if (model.architecture == Architecture::Single) {
    throw UnsupportedArchitecture("score_embedded: single-encoder models score joint pairs only");
  }
  return positive_probability(head_forward(model.head, join_features(u, v), false, 0.0, nullptr,
                                           static_cast<HeadCache<T>*>(nullptr)));
}

template <typename T>
T score_pair(const RelModel<T>& model, std::span<const int> nl, std::span<const int> pl) {
  if (model.architecture == Architecture::Single) {
    const auto u = encode_and_pool(model.encoder_a, single_input(nl, pl, model.seq_len));
    return positive_probability(
        head_forward(model.head, u, false, 0.0, nullptr, static_cast<HeadCache<T>*>(nullptr)));
  }
  return score_embedded(model, embed(model, nl, Side::NL), embed(model, pl, Side::PL));
}

template <typename T>
T example_loss(const RelModel<T>& model, std::span<const int> nl, std::span<const int> pl, int label,
               RelModel<T>* grads, bool train_mode, Rng* rng, T grad_scale) {
  if (label != 0 && label != 1) throw ValidationError("example_loss: label must be 0 or 1");
  const double dropout = model.encoder_a.config.dropout;
  if (train_mode && dropout > 0.0 && rng == nullptr) {
    throw ValidationError("example_loss: train mode needs an rng");
  }
  const bool need_grad = grads != nullptr;

  auto cross_entropy = [&](const Matrix<T>& logits, Matrix<T>& d_logits) {
    const T m = std::max(logits[0], logits[1]);
    const T lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    d_logits = Matrix<T>(1, 2);
    for (int c = 0; c < 2; ++c) {
      d_logits[c] = (std::exp(logits[c] - lse) - (c == label ? T(1) : T(0))) * grad_scale;
    }
    return lse - logits[label];
  };

  HeadCache<T> head_cache;
  Matrix<T> d_logits;
  if (model.architecture == Architecture::Single) {
    const auto seq = single_input(nl, pl, model.seq_len);
    EncoderTape<T> tape;
    const auto hidden = forward(model.encoder_a, seq, train_mode, rng, need_grad ? &tape : nullptr);
    const auto mask = std::span<const int>(seq.attention_mask);
    const auto u = pool(hidden, mask);
    const auto logits = head_forward(model.head, u, train_mode, dropout, rng, &head_cache);
    const T loss = cross_entropy(logits, d_logits);
    if (need_grad) {
      const auto du = head_backward(model.head, head_cache, d_logits, grads->head);
      backward(model.encoder_a, tape, pool_backward(du, mask), grads->encoder_a);
    }
    return loss;
  }

  const auto seq_u = side_input(nl, model.seq_len);
  const auto seq_v = side_input(pl, model.seq_len);
  EncoderTape<T> tape_u, tape_v;
  const auto& enc_u = model.encoder_for(Side::NL);
  const auto& enc_v = model.encoder_for(Side::PL);
  const auto hu = forward(enc_u, seq_u, train_mode, rng, need_grad ? &tape_u : nullptr);
  const auto hv = forward(enc_v, seq_v, train_mode, rng, need_grad ? &tape_v : nullptr);
  const auto mask_u = std::span<const int>(seq_u.attention_mask);
  const auto mask_v = std::span<const int>(seq_v.attention_mask);
  const auto u = pool(hu, mask_u);
  const auto v = pool(hv, mask_v);
  const auto logits = head_forward(model.head, join_features(u, v), train_mode, dropout, rng, &head_cache);
  const T loss = cross_entropy(logits, d_logits);
  if (need_grad) {
    const auto dj = head_backward(model.head, head_cache, d_logits, grads->head);
    const std::size_t d = model.dim();
    FeatureVector<T> du(1, d), dv(1, d);
    for (std::size_t j = 0; j < d; ++j) {
      const T diff = u[j] - v[j];
      const T sign = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
      du[j] = dj[j] + dj[2 * d + j] * sign;
      dv[j] = dj[d + j] - dj[2 * d + j] * sign;
    }
    auto& grad_v = model.architecture == Architecture::Twin ? *grads->encoder_b : grads->encoder_a;
    backward(enc_u, tape_u, pool_backward(du, mask_u), grads->encoder_a);
    backward(enc_v, tape_v, pool_backward(dv, mask_v), grad_v);
  }
  return loss;
}

FeatureVector<float> RelScorer::embed(std::span<const int> body, Side side) const {
  auto out = tracer::embed(model_, body, side);
  calls_.fetch_add(1);
  return out;
}

float RelScorer::score(std::span<const int> nl, std::span<const int> pl) const {
  if (model_.architecture == Architecture::Single) {
    const float s = score_pair(model_, nl, pl);
    calls_.fetch_add(1);
    return s;
  }
  return score_embedded(embed(nl, Side::NL), embed(pl, Side::PL));
}

float RelScorer::score_embedded(const FeatureVector<float>& u, const FeatureVector<float>& v) const {
  return tracer::score_embedded(model_, u, v);
}

Matrix<float> RelScorer::score_grid(std::span<const std::vector<int>> sources,
                                    std::span<const std::vector<int>> targets) const {
  const std::size_t ns = sources.size(), nt = targets.size();
  Matrix<float> out(ns, nt);
  if (model_.architecture == Architecture::Single) {
    const long long total = static_cast<long long>(ns * nt);
#pragma omp parallel for schedule(dynamic, 4)
    for (long long idx = 0; idx < total; ++idx) {
      const std::size_t i = static_cast<std::size_t>(idx) / nt, j = static_cast<std::size_t>(idx) % nt;
      out(i, j) = score(sources[i], targets[j]);
    }
    return out;
  }
  std::vector<FeatureVector<float>> u(ns), v(nt);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < static_cast<long long>(ns); ++i) u[i] = embed(sources[i], Side::NL);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long j = 0; j < static_cast<long long>(nt); ++j) v[j] = embed(targets[j], Side::PL);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(ns); ++i) {
    for (std::size_t j = 0; j < nt; ++j) out(i, j) = score_embedded(u[i], v[j]);
  }
  return out;
}

RelModel<float> transfer(const RelModel<float>& from, Architecture target) {
  if (from.architecture != target) {
    throw ValidationError("cannot transfer a " + std::string(to_string(from.architecture)) + " model into a " +
                          std::string(to_string(target)) + " model");
  }
  from.validate();
  RelModel<float> out = from;
  out.transferred = true;
  return out;
}

namespace {

constexpr int kBundleVersion = 1;

std::vector<std::pair<std::string, const Matrix<float>*>> const_tensors(
    const std::vector<std::pair<std::string, Matrix<float>*>>& src) {
  std::vector<std::pair<std::string, const Matrix<float>*>> out;
  for (const auto& [n, m] : src) out.emplace_back(n, m);
  return out;
}

}  // namespace

void save_model_bundle(const RelModel<float>& model, const Vocab& vocab, const std::filesystem::path& dir,
                       const json& extra) {
  model.validate();
  if (vocab.size() != model.encoder_a.config.vocab_size) {
    throw ValidationError("vocabulary size differs from the encoder's");
  }
  std::filesystem::create_directories(dir);
  auto copy = model;
  save_encoder(copy.encoder_a, dir / "encoder_a.ckpt");
  if (copy.encoder_b) save_encoder(*copy.encoder_b, dir / "encoder_b.ckpt");
  std::vector<std::pair<std::string, Matrix<float>*>> head;
  copy.head.visit([&](const std::string& n, Matrix<float>& m) { head.emplace_back(n, &m); });
  save_tensors(dir / "head.ckpt", "head", {{"input", model.head_input()}, {"hidden", model.dim()}},
               const_tensors(head));
  vocab.save(dir / "vocab.txt");
  json manifest = extra.is_object() ? extra : json::object();
  manifest["format_version"] = kBundleVersion;
  manifest["architecture"] = std::string(to_string(model.architecture));
  manifest["dim"] = model.dim();
  manifest["seq_len"] = model.seq_len;
  manifest["vocab_hash"] = vocab.hash();
  manifest["vocab_size"] = vocab.size();
  manifest["transferred"] = model.transferred;
  manifest["encoder"] = to_json(model.encoder_a.config);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

ModelBundle load_model_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("model bundle has no manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(manifest_path.string(), 1, e.what());
  }
  if (manifest.value("format_version", 0) != kBundleVersion) {
    throw ValidationError(manifest_path.string() + ": unsupported bundle version");
  }
  auto vocab = Vocab::load(dir / "vocab.txt");
  if (vocab.hash() != manifest.value("vocab_hash", std::string())) {
    throw ValidationError(dir.string() + ": vocabulary hash does not match the manifest");
  }
  RelModel<float> model;
  model.architecture = parse_architecture(manifest.at("architecture").get<std::string>());
  model.seq_len = manifest.at("seq_len").get<std::size_t>();
  model.transferred = manifest.value("transferred", false);
  model.encoder_a = load_encoder(dir / "encoder_a.ckpt");
  if (model.architecture == Architecture::Twin) model.encoder_b = load_encoder(dir / "encoder_b.ckpt");
  if (model.dim() != manifest.at("dim").get<std::size_t>()) {
    throw ValidationError(dir.string() + ": encoder width does not match the manifest");
  }
  model.head = HeadParams<float>::zeros(model.head_input(), model.dim());
  std::vector<std::pair<std::string, Matrix<float>*>> head;
  model.head.visit([&](const std::string& n, Matrix<float>& m) { head.emplace_back(n, &m); });
  assign_tensors(load_tensors(dir / "head.ckpt"), head);
  if (vocab.size() != model.encoder_a.config.vocab_size) {
    throw ValidationError(dir.string() + ": vocabulary size does not match the encoder");
  }
  model.validate();
  return {std::move(model), std::move(vocab), std::move(manifest)};
}

template struct HeadParams<float>;
template struct HeadParams<double>;
template struct RelModel<float>;
template struct RelModel<double>;

#define TRACER_INSTANTIATE(T)                                                                       \
  template FeatureVector<T> join_features<T>(const FeatureVector<T>&, const FeatureVector<T>&);     \
  template T positive_probability<T>(const Matrix<T>&);                                             \
  template FeatureVector<T> embed<T>(const RelModel<T>&, std::span<const int>, Side);               \
  template T score_pair<T>(const RelModel<T>&, std::span<const int>, std::span<const int>);         \
  template T score_embedded<T>(const RelModel<T>&, const FeatureVector<T>&, const FeatureVector<T>&); \
  template T example_loss<T>(const RelModel<T>&, std::span<const int>, std::span<const int>, int,   \
                             RelModel<T>*, bool, Rng*, T);

TRACER_INSTANTIATE(float)
TRACER_INSTANTIATE(double)

}  // namespace tracer
