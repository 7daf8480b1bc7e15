#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tracer/corpus.hpp"

namespace tracer {

/// One source artifact's ranked candidate list. Candidates are kept sorted
/// by descending score, ties by ascending target id.
class RankedQuery {
 public:
  RankedQuery(std::string query_id, std::vector<std::pair<std::string, double>> candidates,
              std::set<std::string> relevant);

  const std::string& query_id() const noexcept { return query_id_; }
  const std::vector<std::pair<std::string, double>>& candidates() const noexcept {
    return candidates_;
  }
  const std::set<std::string>& relevant() const noexcept { return relevant_; }
  /// 1-based ranks of the relevant candidates, ascending.
  const std::vector<std::size_t>& relevant_ranks() const noexcept { return ranks_; }

 private:
  std::string query_id_;
  std::vector<std::pair<std::string, double>> candidates_;
  std::set<std::string> relevant_;
  std::vector<std::size_t> ranks_;
};

struct ScoredLink {
  std::string source;
  std::string target;
  double score = 0.0;
};

/// (1+β²)·p·r / (β²·p + r), 0 when p = r = 0.
double f_beta(double precision, double recall, double beta);

struct BestF {
  double f = 0.0;
  double threshold = 0.0;
};

/// Predicts score ≥ t as linked for every t among the distinct scores plus
/// 0 and 1; returns the best F-β and the smallest threshold reaching it.
BestF best_f_over_thresholds(std::span<const ScoredLink> scored, const std::set<Link>& gold,
                             double beta);

/// Queries with no relevant candidate are skipped by every ranking metric.
std::size_t count_excluded(std::span<const RankedQuery> queries);

/// Mean over queries of (Σ P@rank_i over relevant ranks ≤ cutoff) / k.
double map_at_k(std::span<const RankedQuery> queries, std::size_t cutoff = 3);
double mrr(std::span<const RankedQuery> queries);
/// Relevant hits in the top K of every query over the total relevant count.
double precision_at_k(std::span<const RankedQuery> queries, std::size_t k);

struct MetricConfig {
  std::vector<double> betas{1.0, 2.0};
  std::vector<std::size_t> ks{1, 2, 3};
  std::size_t map_cutoff = 3;
};

/// Flat metric table keyed f1, f2, map3, mrr, p1, p2, p3 (plus thresholds
/// as f1_threshold, f2_threshold when links are given).
struct MetricSummary {
  std::map<std::string, double> values;
  std::size_t queries = 0;
  std::size_t excluded = 0;
};

MetricSummary summarize(std::span<const RankedQuery> queries, std::span<const ScoredLink> scored,
                        const std::set<Link>& gold, const MetricConfig& config = {});

/// Ranking metrics only, for protocols without a thresholded link set.
MetricSummary summarize_ranking(std::span<const RankedQuery> queries,
                                const MetricConfig& config = {});

}  // namespace tracer
