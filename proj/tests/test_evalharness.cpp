#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "tracer/baselines.hpp"
#include "tracer/error.hpp"
#include "tracer/evalharness.hpp"

using namespace tracer;

namespace {

// 520 planted pairs over 10 folds leaves 52 links in the test fold.
const Project& trace_project() {
  static const Project p = make_planted_corpus(520, {}, 0.5, 3);
  return p;
}

const SplitSpec& trace_split() {
  static const SplitSpec s = split_folds(trace_project().gold, 10, 3);
  return s;
}

Vocab project_vocab(const Project& p) {
  std::vector<std::string> texts;
  for (const auto& a : p.nl) texts.push_back(a.text());
  for (const auto& a : p.pl) texts.push_back(a.text());
  return Vocab::build(texts, 400);
}

RelModel<float> small_model(Architecture arch, std::size_t vocab_size) {
  EncoderConfig c;
  c.layers = 1;
  c.heads = 2;
  c.dim = 16;
  c.ff_dim = 32;
  c.max_positions = 64;
  c.vocab_size = vocab_size;
  return RelModel<float>::init(arch, c, 48, 1);
}

}  // namespace

TEST(Protocol, Validation) {
  EvalProtocol p;
  p.pool_size = 1;
  EXPECT_THROW(p.validate(), ConfigError);
  p.pool_size = 2;
  p.query_limit = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(TraceEval, FiftyTwoSquaredCandidatesAndOracleScoresOne) {
  OraclePairModel oracle(trace_project().gold.links);
  const auto r = trace_eval(oracle, trace_project(), trace_split());
  EXPECT_EQ(r.sources, 52u);
  EXPECT_EQ(r.targets, 52u);
  EXPECT_EQ(r.candidates, 2704u);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("f1"), 1.0);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("f2"), 1.0);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("map3"), 1.0);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("mrr"), 1.0);
  EXPECT_EQ(r.encoder_calls, 0u);
}

TEST(TraceEval, EncoderCallsFollowArchitecture) {
  const auto vocab = project_vocab(trace_project());
  for (auto arch : {Architecture::Twin, Architecture::Siamese, Architecture::Single}) {
    const auto model = small_model(arch, vocab.size());
    NeuralPairModel pm(model, vocab);
    const auto r = trace_eval(pm, trace_project(), trace_split());
    EXPECT_EQ(r.encoder_calls, arch == Architecture::Single ? 2704u : 104u) << to_string(arch);
  }
}

TEST(TraceEval, CachedScoresEqualPairwiseScoresBitwise) {
  const auto vocab = project_vocab(trace_project());
  const auto& p = trace_project();
  TextSet sources, targets;
  for (std::size_t i = 0; i < 4; ++i) {
    sources.ids.push_back(p.nl[i].id);
    sources.texts.push_back(p.nl[i].text());
    targets.ids.push_back(p.pl[i].id);
    targets.texts.push_back(p.pl[i].text());
  }
  for (auto arch : {Architecture::Twin, Architecture::Siamese}) {
    const auto model = small_model(arch, vocab.size());
    NeuralPairModel pm(model, vocab);
    pm.prepare(sources, targets);
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t t = 0; t < 4; ++t) {
        const auto nl = vocab.tokenize(sources.texts[s]);
        const auto pl = vocab.tokenize(targets.texts[t]);
        EXPECT_EQ(static_cast<float>(pm.score(s, t)), score_pair(model, nl, pl)) << to_string(arch);
      }
    }
  }
}

TEST(TraceEval, EmptyTestFoldIsAnError) {
  auto split = trace_split();
  for (auto& [link, fold] : split.fold_of) {
    if (fold == split.test_fold) fold = 0;
  }
  OraclePairModel oracle(trace_project().gold.links);
  EXPECT_THROW(trace_eval(oracle, trace_project(), split), ValidationError);
}

TEST(PlantedCorpus, VsmIsPerfectWithoutNoiseAndWeakWithFullNoise) {
  for (double noise : {0.0, 1.0}) {
    const auto p = make_planted_corpus(200, {}, noise, 8);
    const auto split = split_folds(p.gold, 10, 8);
    VsmPairModel vsm;
    const double map = trace_eval(vsm, p, split).metrics.values.at("map3");
    if (noise == 0.0) {
      EXPECT_DOUBLE_EQ(map, 1.0);
    } else {
      EXPECT_LT(map, 0.5);
    }
  }
}

TEST(CodeSearchPool, OneRelevantAndDistinctDistractors) {
  std::vector<std::string> universe;
  for (int i = 0; i < 50; ++i) universe.push_back("f" + std::to_string(i));
  const std::set<std::string> excluded{"f3", "f4"};
  const auto pool = code_search_pool("q1", "f7", universe, excluded, 20, 9);
  ASSERT_EQ(pool.size(), 20u);
  EXPECT_EQ(pool.front(), "f7");
  EXPECT_EQ(std::set<std::string>(pool.begin(), pool.end()).size(), 20u);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    EXPECT_NE(pool[i], "f7");
    EXPECT_FALSE(excluded.contains(pool[i]));
  }
  EXPECT_EQ(pool, code_search_pool("q1", "f7", universe, excluded, 20, 9));
  EXPECT_NE(pool, code_search_pool("q2", "f7", universe, excluded, 20, 9));
  EXPECT_THROW(code_search_pool("q1", "f7", universe, excluded, 49, 9), ValidationError);
}

TEST(CodeSearchEval, PoolsOracleAndDeterminism) {
  PlantedProfile profile;
  profile.kind = PlantedKind::CodeSearch;
  const auto p = make_planted_corpus(400, profile, 0.5, 2);
  const auto split = split_folds(p.gold, 10, 2);
  EvalProtocol protocol;
  protocol.mode = EvalMode::CodeSearch;
  protocol.pool_size = 30;
  protocol.seed = 4;
  OraclePairModel oracle(p.gold.links);
  const auto r = code_search_eval(oracle, p, split, protocol);
  EXPECT_EQ(r.sources, 40u);
  EXPECT_EQ(r.candidates, 40u * 30u);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("mrr"), 1.0);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("map3"), 1.0);
  EXPECT_DOUBLE_EQ(r.metrics.values.at("p1"), 1.0);

  RandomPairModel random_a(1), random_b(1);
  const auto a = code_search_eval(random_a, p, split, protocol);
  const auto b = code_search_eval(random_b, p, split, protocol);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(report_to_csv(a), report_to_csv(b));

  protocol.query_limit = 10;
  EXPECT_EQ(code_search_eval(oracle, p, split, protocol).sources, 10u);
  protocol.pool_size = 41;
  EXPECT_THROW(code_search_eval(oracle, p, split, protocol), ValidationError);
}

TEST(CodeSearchEval, RandomScorerMrrNearAnalyticExpectation) {
  PlantedProfile profile;
  profile.kind = PlantedKind::CodeSearch;
  const auto p = make_planted_corpus(1000, profile, 0.5, 6);
  const auto split = split_folds(p.gold, 10, 6);
  EvalProtocol protocol;
  protocol.mode = EvalMode::CodeSearch;
  protocol.pool_size = 100;
  double expected = 0;
  for (int i = 1; i <= 100; ++i) expected += 1.0 / i;
  expected /= 100.0;
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    protocol.seed = seed;
    RandomPairModel random(seed);
    total += code_search_eval(random, p, split, protocol).metrics.values.at("mrr");
  }
  const double mean = total / 20.0;
  EXPECT_GT(mean, expected / 3.0);
  EXPECT_LT(mean, expected * 3.0);
}

TEST(Reports, JsonCsvAndTable) {
  OraclePairModel oracle(trace_project().gold.links);
  const auto r = trace_eval(oracle, trace_project(), trace_split());
  const auto j = report_to_json(r);
  EXPECT_EQ(j.at("model"), "oracle");
  EXPECT_EQ(j.at("candidates"), 2704);
  EXPECT_FALSE(j.contains("wall_seconds"));
  const auto csv = report_to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  const std::vector<EvalReport> rows{r, r};
  const auto table = report_to_table(rows);
  EXPECT_NE(table.find("MAP"), std::string::npos);
  EXPECT_NE(table.find("Pr@3"), std::string::npos);
}

TEST(EvaluateGrid, RejectsEmptySides) {
  OraclePairModel oracle({});
  EXPECT_THROW(evaluate_grid(oracle, TextSet{}, TextSet{{"t"}, {"x"}}, {}), ValidationError);
}
