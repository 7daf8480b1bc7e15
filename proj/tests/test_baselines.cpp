#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "tracer/baselines.hpp"
#include "tracer/error.hpp"
#include "tracer/rng.hpp"

using namespace tracer;

namespace {

using Strings = std::vector<std::string>;

double dense_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

Strings ids_for(std::size_t n) {
  Strings out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("d" + std::to_string(i));
  return out;
}

const Strings kTopicA{"apple", "banana", "cherry", "grape", "lemon", "mango"};
const Strings kTopicB{"xray", "yacht", "zebra", "walrus", "violin", "urchin"};

// Document i mixes topic-A and topic-B words in a distinct proportion.
Strings mixture_corpus(std::size_t docs, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  Strings out;
  for (std::size_t d = 0; d < docs; ++d) {
    const double share = static_cast<double>(d) / static_cast<double>(docs - 1);
    std::string text;
    for (std::size_t w = 0; w < length; ++w) {
      const auto& pool = rng.bernoulli(share) ? kTopicB : kTopicA;
      text += pool[rng.index(pool.size())] + " ";
    }
    out.push_back(text);
  }
  return out;
}

Strings two_topic_corpus(std::size_t per_topic, std::uint64_t seed) {
  Rng rng(seed);
  Strings out;
  for (const auto* pool : {&kTopicA, &kTopicB}) {
    for (std::size_t d = 0; d < per_topic; ++d) {
      std::string text;
      for (int w = 0; w < 30; ++w) text += (*pool)[rng.index(pool->size())] + " ";
      out.push_back(text);
    }
  }
  return out;
}

LdaConfig small_lda(std::uint64_t seed) {
  auto c = LdaConfig::defaults(2);
  c.iterations = 200;
  c.inference_iterations = 50;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(BaselineTerms, LowercasedWithoutPunctuation) {
  EXPECT_EQ(baseline_terms("parseJSON(data_file);"), (Strings{"parse", "json", "data", "file"}));
}

TEST(Vsm, HandComputedThreeDocumentOracle) {
  const Strings docs{"a b", "b c c", "a a d"};
  const auto index = TfIdfIndex::build(docs);
  const double ia = std::log(1.5), ic = std::log(3.0);
  EXPECT_NEAR(index.idf(static_cast<std::size_t>(index.term_id("a"))), ia, 1e-15);
  EXPECT_NEAR(index.idf(static_cast<std::size_t>(index.term_id("c"))), ic, 1e-15);
  // Term order a, b, c, d.
  const std::vector<std::vector<double>> w{{0.5 * ia, 0.5 * ia, 0, 0},
                                           {0, ia / 3, 2 * ic / 3, 0},
                                           {2 * ia / 3, 0, 0, ic / 3}};
  const std::vector<double> q{0.5 * ia, 0, 0.5 * ic, 0};
  const auto s = index.scores("a c");
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(s[d], dense_cosine(q, w[d]), 1e-9);
}

TEST(Vsm, IdenticalQueryRanksFirstWithCosineOne) {
  const Strings docs{"open the file", "close the socket", "parse json input"};
  const auto index = TfIdfIndex::build(docs);
  const auto ids = ids_for(3);
  const auto q = vsm_rank("q", docs[2], index, ids, {"d2"});
  EXPECT_EQ(q.candidates()[0].first, "d2");
  EXPECT_NEAR(q.candidates()[0].second, 1.0, 1e-12);
}

TEST(Vsm, DisjointQueryScoresZero) {
  const auto index = TfIdfIndex::build(Strings{"open file", "close socket"});
  for (double s : index.scores("zebra yacht")) EXPECT_EQ(s, 0.0);
  for (double s : index.scores("")) EXPECT_EQ(s, 0.0);
}

TEST(Vsm, SelfRetrievalOnUniqueTexts) {
  const auto docs = mixture_corpus(12, 8, 4);
  const auto index = TfIdfIndex::build(docs);
  const auto ids = ids_for(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto q = vsm_rank("q", docs[d], index, ids, {ids[d]});
    EXPECT_EQ(q.relevant_ranks().front(), 1u) << d;
  }
}

TEST(Vsm, WeightsNonNegative) {
  const auto index = TfIdfIndex::build(mixture_corpus(10, 12, 2));
  EXPECT_GE(index.dense().minCoeff(), 0.0);
}

TEST(Lsi, SingularValuesMatchEigenOracleOnEightBySix) {
  const Strings docs{"t0 t1 t1", "t2 t3", "t4 t5 t0", "t6 t7 t7 t2", "t1 t5 t6", "t3 t4 t7 t0"};
  const auto index = TfIdfIndex::build(docs);
  ASSERT_EQ(index.terms(), 8u);
  const Eigen::MatrixXd a = index.dense();
  ASSERT_EQ(a.rows(), 8);
  ASSERT_EQ(a.cols(), 6);
  const Eigen::MatrixXd gram = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  std::vector<double> oracle;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) oracle.push_back(std::sqrt(std::max(0.0, eig.eigenvalues()(i))));
  std::sort(oracle.rbegin(), oracle.rend());
  const auto lsi = LsiModel::fit(index, 6);
  ASSERT_EQ(lsi.rank(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(lsi.singular_values()(static_cast<Eigen::Index>(i)), oracle[i], 1e-8);
  }
  for (Eigen::Index i = 1; i < 6; ++i) {
    EXPECT_LE(lsi.singular_values()(i), lsi.singular_values()(i - 1));
  }
}

TEST(Lsi, FullRankReproducesVsmOrdering) {
  const auto docs = mixture_corpus(10, 10, 7);
  const auto index = TfIdfIndex::build(docs);
  const auto lsi = LsiModel::fit(index, std::min(index.terms(), index.documents()));
  for (const std::string query : {"apple zebra", "banana banana yacht", "violin lemon grape"}) {
    const auto vsm = index.scores(query), latent = lsi.scores(query, index);
    for (std::size_t j = 0; j < vsm.size(); ++j) {
      for (std::size_t k = 0; k < vsm.size(); ++k) {
        if (vsm[j] > vsm[k] + 1e-9) {
          EXPECT_GT(latent[j], latent[k]) << query;
        }
      }
    }
  }
}

TEST(Lsi, DuplicateDocumentsScoreIdentically) {
  const Strings docs{"open file now", "close socket", "open file now", "parse json"};
  const auto index = TfIdfIndex::build(docs);
  const auto lsi = LsiModel::fit(index, 2);
  const auto s = lsi.scores("open socket", index);
  EXPECT_NEAR(s[0], s[2], 1e-12);
}

TEST(Lsi, OversizedRankIsReduced) {
  const auto index = TfIdfIndex::build(Strings{"a b", "c d", "a b"});
  const auto lsi = LsiModel::fit(index, 64);
  EXPECT_TRUE(lsi.rank_reduced());
  EXPECT_EQ(lsi.rank(), 2u);
  EXPECT_THROW(LsiModel::fit(index, 0), ConfigError);
}

TEST(Lda, RejectsBadConfig) {
  auto c = LdaConfig::defaults(1);
  EXPECT_THROW(c.validate(), ConfigError);
  c = LdaConfig::defaults(4);
  EXPECT_DOUBLE_EQ(c.alpha, 12.5);
  c.eta = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(LdaModel::fit(two_topic_corpus(3, 1), LdaConfig::defaults(1)), ConfigError);
}

TEST(Lda, DistributionsSumToOneAndFitIsDeterministic) {
  const auto docs = two_topic_corpus(8, 2);
  const auto m = LdaModel::fit(docs, small_lda(3));
  for (const auto& row : m.document_topics()) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-8);
  for (const auto& row : m.topic_words()) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-8);
  const auto inferred = m.infer(docs[0]);
  EXPECT_NEAR(std::accumulate(inferred.begin(), inferred.end(), 0.0), 1.0, 1e-8);
  const auto again = LdaModel::fit(docs, small_lda(3));
  EXPECT_EQ(again.document_topics(), m.document_topics());
  EXPECT_EQ(again.scores("apple yacht"), m.scores("apple yacht"));
}

TEST(Lda, DisjointTopicsSeparateByLnTwo) {
  const auto docs = two_topic_corpus(10, 5);
  // A weak document prior lets each document commit to one topic.
  auto config = small_lda(1);
  config.alpha = 0.1;
  const auto m = LdaModel::fit(docs, config);
  const auto& theta = m.document_topics();
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 10; j < 20; ++j) EXPECT_NEAR(js_divergence(theta[i], theta[j]), std::log(2.0), 0.1);
    EXPECT_LT(js_divergence(theta[i], theta[(i + 1) % 10]), 0.05);
  }
}

TEST(Lda, PlantedSplitPurityFiveSeedMedian) {
  std::vector<double> purities;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = LdaModel::fit(two_topic_corpus(10, seed + 10), small_lda(seed));
    double total = 0;
    for (const auto& phi : m.topic_words()) {
      double a = 0, b = 0;
      for (const auto& w : kTopicA) a += phi[static_cast<std::size_t>(m.term_id(w))];
      for (const auto& w : kTopicB) b += phi[static_cast<std::size_t>(m.term_id(w))];
      total += std::max(a, b);
    }
    purities.push_back(total / 2.0);
  }
  std::sort(purities.begin(), purities.end());
  EXPECT_GE(purities[2], 0.9);
}

TEST(Lda, DocumentIsMostSimilarToItself) {
  const auto docs = mixture_corpus(8, 40, 3);
  const auto m = LdaModel::fit(docs, small_lda(4));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto s = m.scores(docs[d]);
    const auto best = std::max_element(s.begin(), s.end()) - s.begin();
    EXPECT_EQ(static_cast<std::size_t>(best), d);
  }
}

TEST(JsDivergence, BoundsAndErrors) {
  const std::vector<double> p{1, 0}, q{0, 1}, u{0.5, 0.5};
  EXPECT_NEAR(js_divergence(p, q), std::log(2.0), 1e-12);
  EXPECT_EQ(js_divergence(u, u), 0.0);
  EXPECT_NEAR(js_divergence(p, u), js_divergence(u, p), 1e-15);
  EXPECT_THROW(js_divergence(p, std::vector<double>{1, 0, 0}), ValidationError);
}

TEST(PairModels, VsmAdapterMatchesIndex) {
  TextSet sources{{"q0", "q1"}, {"open file", "json parse"}};
  TextSet targets{{"t0", "t1", "t2"}, {"open the file", "parse json input", "close socket"}};
  VsmPairModel vsm;
  vsm.prepare(sources, targets);
  const auto index = TfIdfIndex::build(targets.texts);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto want = index.scores(sources.texts[s]);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(vsm.score(s, t), want[t], 1e-12);
  }
  EXPECT_EQ(vsm.encoder_calls(), 0u);
  LsiPairModel lsi(3);
  lsi.prepare(sources, targets);
  EXPECT_GT(lsi.score(0, 0), lsi.score(0, 2));
}
