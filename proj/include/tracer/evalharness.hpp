#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tracer/corpus.hpp"
#include "tracer/metrics.hpp"
#include "tracer/pair_model.hpp"
#include "tracer/relhead.hpp"

namespace tracer {

/// Relation model behind the PairModel interface. TWIN and SIAMESE embed
/// every prepared artifact once; SINGLE encodes each scored pair.
class NeuralPairModel : public PairModel {
 public:
  NeuralPairModel(const RelModel<float>& model, const Vocab& vocab) : scorer_(model), vocab_(vocab) {}

  std::string name() const override { return std::string(to_string(scorer_.model().architecture)); }
  void prepare(const TextSet& sources, const TextSet& targets) override;
  double score(std::size_t source, std::size_t target) const override;
  std::uint64_t encoder_calls() const override { return scorer_.encoder_calls(); }

 private:
  RelScorer scorer_;
  const Vocab& vocab_;
  std::vector<std::vector<int>> source_tokens_, target_tokens_;
  std::vector<FeatureVector<float>> source_vecs_, target_vecs_;
};

/// Scores 1 for gold links and 0 otherwise.
class OraclePairModel : public PairModel {
 public:
  explicit OraclePairModel(std::set<Link> gold) : gold_(std::move(gold)) {}
  std::string name() const override { return "oracle"; }
  void prepare(const TextSet& sources, const TextSet& targets) override;
  double score(std::size_t source, std::size_t target) const override;

 private:
  std::set<Link> gold_;
  TextSet sources_, targets_;
};

/// Uniform scores derived from (seed, source id, target id).
class RandomPairModel : public PairModel {
 public:
  explicit RandomPairModel(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random"; }
  void prepare(const TextSet& sources, const TextSet& targets) override;
  double score(std::size_t source, std::size_t target) const override;

 private:
  std::uint64_t seed_;
  std::vector<std::uint64_t> source_keys_, target_keys_;
};

enum class EvalMode { CodeSearch, Trace };

struct EvalProtocol {
  EvalMode mode = EvalMode::Trace;
  std::size_t pool_size = 1000;
  std::optional<std::size_t> query_limit;
  std::uint64_t seed = 0;

  /// Throws ConfigError when pool_size < 2 or query_limit is 0.
  void validate() const;
};

struct EvalReport {
  std::string model;
  EvalProtocol protocol;
  MetricSummary metrics;
  std::size_t sources = 0;
  std::size_t targets = 0;
  std::size_t candidates = 0;  ///< scored (source, target) pairs
  std::uint64_t encoder_calls = 0;
  double wall_seconds = 0.0;
};

/// Everything except wall time, so fixed seeds give byte-identical output.
nlohmann::json report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);
/// Fixed-width row layout: model, F1, F2, MAP, MRR, Pr@1, Pr@2, Pr@3.
std::string report_to_table(std::span<const EvalReport> reports);

/// Scores the full sources × targets grid. A source's relevant set is every
/// `gold` link into the grid.
EvalReport evaluate_grid(PairModel& model, const TextSet& sources, const TextSet& targets,
                         const std::set<Link>& gold);

/// Every (source, target) pair among the test-fold artifacts.
EvalReport trace_eval(PairModel& model, const Project& project, const SplitSpec& split,
                      const EvalProtocol& protocol = {});

/// One query per test-fold link; its pool is the gold target plus
/// pool_size − 1 distinct distractors drawn from the other test-fold
/// targets with a seed derived from (protocol seed, query id).
EvalReport code_search_eval(PairModel& model, const Project& project, const SplitSpec& split,
                            const EvalProtocol& protocol);

/// The pool drawn for one code-search query: gold target first, then the
/// distractors in draw order. Exposed for protocol checks.
std::vector<std::string> code_search_pool(const std::string& query_id, const std::string& gold_target,
                                          const std::vector<std::string>& universe,
                                          const std::set<std::string>& excluded, std::size_t pool_size,
                                          std::uint64_t seed);

enum class PlantedKind { Trace, CodeSearch };

/// Shape of a synthetic corpus. The concept table (an NL word and a PL
/// synonym per concept) and the filler lexicon depend only on vocab_seed,
/// so corpora generated with the same vocab_seed share their semantics.
struct PlantedProfile {
  PlantedKind kind = PlantedKind::Trace;
  std::size_t concepts = 120;
  std::size_t keys_per_pair = 3;
  std::size_t nl_filler = 4;
  std::size_t pl_filler = 4;
  std::uint64_t vocab_seed = 7;
};

struct PlantedConcept {
  std::string nl_word;
  std::string pl_synonym;
};

std::vector<PlantedConcept> planted_concepts(const PlantedProfile& profile);

/// n_pairs linked NL/PL artifacts. Each pair shares keys_per_pair concepts;
/// the PL side spells each key as its synonym with probability `noise`.
/// Throws ValidationError for n_pairs < 10 or noise outside [0, 1].
Project make_planted_corpus(std::size_t n_pairs, const PlantedProfile& profile, double noise,
                            std::uint64_t seed);

}  // namespace tracer
