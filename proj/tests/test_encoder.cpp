#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "tracer/encoder.hpp"
#include "tracer/error.hpp"

using namespace tracer;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.layers = 2;
  c.heads = 2;
  c.dim = 8;
  c.ff_dim = 16;
  c.max_positions = 12;
  c.vocab_size = 20;
  c.dropout = 0.1;
  return c;
}

TokenSequence sample_pair() { return encode_pair_ids(std::vector<int>{7, 9, 11}, std::vector<int>{5, 6, 19, 8}, 12); }

// Weighted sum of hidden states with fixed weights, so the loss is a scalar.
double probe_loss(const EncoderParams<double>& p, const TokenSequence& seq, const Matrix<double>& w,
                  bool train, EncoderTape<double>* tape) {
  Rng rng(99);
  const auto h = forward(p, seq, train, &rng, tape);
  double s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * w[i];
  return s;
}

}  // namespace

TEST(Encoder, BackwardMatchesFiniteDifferences) {
  const auto cfg = tiny_config();
  auto p = EncoderParams<double>::init(cfg, 3);
  // Non-trivial layer-norm parameters so their gradients are exercised.
  Rng jitter(4);
  p.visit([&](const std::string&, Matrix<double>& m) {
    for (auto& x : m.flat()) x += 0.05 * jitter.normal();
  });
  const auto seq = sample_pair();
  Matrix<double> w(seq.length(), cfg.dim);
  Rng wr(5);
  for (auto& x : w.flat()) x = wr.normal();

  for (bool train : {false, true}) {
    EncoderTape<double> tape;
    probe_loss(p, seq, w, train, &tape);
    auto grads = EncoderParams<double>::zeros(cfg);
    backward(p, tape, w, grads);

    auto named = p.named_tensors();
    auto gnamed = grads.named_tensors();
    Rng pick(6);
    for (std::size_t t = 0; t < named.size(); ++t) {
      if (named[t].first.starts_with("mlm.")) continue;
      auto& m = *named[t].second;
      for (int trial = 0; trial < 6; ++trial) {
        const std::size_t i = pick.index(m.size());
        const double orig = m[i];
        const double h = 1e-6;
        m[i] = orig + h;
        const double up = probe_loss(p, seq, w, train, nullptr);
        m[i] = orig - h;
        const double down = probe_loss(p, seq, w, train, nullptr);
        m[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = (*gnamed[t].second)[i];
        EXPECT_LE(std::abs(numeric - analytic), 1e-7 + 1e-5 * std::abs(numeric))
            << named[t].first << "[" << i << "] train=" << train << " numeric=" << numeric
            << " analytic=" << analytic;
      }
    }
  }
}

TEST(Encoder, MlmGradientMatchesFiniteDifferences) {
  const auto cfg = tiny_config();
  auto p = EncoderParams<double>::init(cfg, 8);
  const auto masked = mask_tokens(encode_ids(std::vector<int>{5, 6, 7, 8, 9, 10, 11, 12, 13}, 12), cfg.vocab_size, 0.4, 2);
  auto grads = EncoderParams<double>::zeros(cfg);
  mlm_loss<double>(p, masked, &grads);
  auto named = p.named_tensors();
  auto gnamed = grads.named_tensors();
  Rng pick(7);
  for (std::size_t t = 0; t < named.size(); ++t) {
    auto& m = *named[t].second;
    for (int trial = 0; trial < 4; ++trial) {
      const std::size_t i = pick.index(m.size());
      const double orig = m[i];
      m[i] = orig + 1e-6;
      const double up = mlm_loss<double>(p, masked).loss;
      m[i] = orig - 1e-6;
      const double down = mlm_loss<double>(p, masked).loss;
      m[i] = orig;
      const double numeric = (up - down) / 2e-6;
      const double analytic = (*gnamed[t].second)[i];
      EXPECT_NEAR(numeric, analytic, 1e-6 + 1e-5 * std::abs(numeric)) << named[t].first;
    }
  }
}

TEST(Encoder, PaddingDoesNotChangeValidPositions) {
  const auto cfg = tiny_config();
  const auto p = EncoderParams<double>::init(cfg, 1);
  const auto padded = sample_pair();
  const auto trimmed = trim_padding(padded);
  ASSERT_LT(trimmed.length(), padded.length());
  const auto a = forward(p, padded), b = forward(p, trimmed);
  for (std::size_t i = 0; i < trimmed.length(); ++i) {
    for (std::size_t j = 0; j < cfg.dim; ++j) EXPECT_NEAR(a(i, j), b(i, j), 1e-12);
  }
  const auto pa = pool(a, padded.attention_mask), pb = pool(b, trimmed.attention_mask);
  for (std::size_t j = 0; j < cfg.dim; ++j) EXPECT_NEAR(pa[j], pb[j], 1e-12);
}

TEST(Encoder, PoolIsMaskedMeanAndBackwardSpreadsEvenly) {
  Matrix<double> h(3, 2);
  h(0, 0) = 1, h(0, 1) = 2, h(1, 0) = 3, h(1, 1) = 4, h(2, 0) = 100, h(2, 1) = 100;
  const std::vector<int> mask{1, 1, 0};
  const auto v = pool(h, mask);
  EXPECT_DOUBLE_EQ(v[0], 2.0);
  EXPECT_DOUBLE_EQ(v[1], 3.0);
  Matrix<double> d(1, 2);
  d[0] = 1, d[1] = -1;
  const auto g = pool_backward(d, mask);
  EXPECT_DOUBLE_EQ(g(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g(1, 1), -0.5);
  EXPECT_DOUBLE_EQ(g(2, 0), 0.0);
}

TEST(Encoder, EvalModeIsDeterministicAndDropoutIsSeeded) {
  const auto cfg = tiny_config();
  const auto p = EncoderParams<float>::init(cfg, 2);
  const auto seq = sample_pair();
  EXPECT_EQ(forward(p, seq), forward(p, seq));
  Rng r1(5), r2(5), r3(6);
  EXPECT_EQ(forward(p, seq, true, &r1), forward(p, seq, true, &r2));
  EXPECT_NE(forward(p, seq, true, &r1), forward(p, seq, true, &r3));
}

TEST(Encoder, ConfigValidationAndJson) {
  auto cfg = tiny_config();
  cfg.init_range = 0.3;
  EXPECT_EQ(encoder_config_from_json(to_json(cfg)), cfg);
  auto bad = cfg;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.init_range = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Encoder, InitScaleFollowsConfig) {
  auto cfg = tiny_config();
  cfg.vocab_size = 400;
  cfg.dim = 32;
  for (double range : {0.02, 0.3}) {
    cfg.init_range = range;
    const auto p = EncoderParams<double>::init(cfg, 4);
    double ss = 0;
    for (double x : p.token_embedding.flat()) ss += x * x;
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(p.token_embedding.size())), range, 0.1 * range);
    EXPECT_EQ(p.layers[0].ln1_gamma[0], 1.0);
    EXPECT_EQ(p.layers[0].bq[0], 0.0);
  }
}

TEST(Encoder, SaveLoadRoundTripIsExact) {
  const auto p = EncoderParams<float>::init(tiny_config(), 9);
  const auto file = std::filesystem::temp_directory_path() / "tracer_encoder_rt.bin";
  save_encoder(p, file);
  EXPECT_EQ(load_encoder(file), p);
  std::filesystem::resize_file(file, 40);
  EXPECT_THROW(load_encoder(file), Error);
  std::filesystem::remove(file);
}

TEST(Encoder, InitialMlmLossIsNearLogVocab) {
  auto cfg = tiny_config();
  cfg.vocab_size = 60;
  cfg.max_positions = 40;
  const auto p = EncoderParams<double>::init(cfg, 3);
  std::vector<int> body;
  for (int i = 0; i < 38; ++i) body.push_back(5 + (i * 7) % 55);
  const auto masked = mask_tokens(encode_ids(body, 40), cfg.vocab_size, 0.3, 1);
  const double loss = mlm_loss<double>(p, masked).loss;
  EXPECT_NEAR(loss, std::log(60.0), 0.1 * std::log(60.0));
}
