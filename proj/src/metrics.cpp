#include "tracer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tracer/error.hpp"

namespace tracer {

RankedQuery::RankedQuery(std::string query_id,
                         std::vector<std::pair<std::string, double>> candidates,
                         std::set<std::string> relevant)
    : query_id_(std::move(query_id)), candidates_(std::move(candidates)), relevant_(std::move(relevant)) {
  std::sort(candidates_.begin(), candidates_.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 1; i < candidates_.size(); ++i) {
    if (candidates_[i].first == candidates_[i - 1].first) {
      throw ValidationError("query " + query_id_ + ": duplicate candidate " + candidates_[i].first);
    }
  }
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (std::isnan(candidates_[i].second)) {
      throw ValidationError("query " + query_id_ + ": NaN score for " + candidates_[i].first);
    }
    if (relevant_.contains(candidates_[i].first)) ranks_.push_back(i + 1);
  }
  if (ranks_.size() != relevant_.size()) {
    throw ValidationError("query " + query_id_ + ": relevant target missing from candidates");
  }
}

double f_beta(double precision, double recall, double beta) {
  if (!(beta > 0.0)) throw ValidationError("f_beta: beta must be positive");
  if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0) {
    throw ValidationError("f_beta: precision and recall must lie in [0, 1]");
  }
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

BestF best_f_over_thresholds(std::span<const ScoredLink> scored, const std::set<Link>& gold,
                             double beta) {
  if (scored.empty()) throw ValidationError("best_f: no scored links");
  if (gold.empty()) throw ValidationError("best_f: gold set is empty, recall undefined");
  std::set<Link> seen;
  std::vector<std::pair<double, bool>> items;
  items.reserve(scored.size());
  for (const auto& s : scored) {
    Link l{s.source, s.target};
    if (!seen.insert(l).second) {
      throw ValidationError("best_f: duplicate link " + s.source + " -> " + s.target);
    }
    items.emplace_back(s.score, gold.contains(l));
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<double> thresholds;
  for (const auto& it : items) thresholds.push_back(it.first);
  thresholds.push_back(0.0);
  thresholds.push_back(1.0);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Walk thresholds from high to low, admitting items with score ≥ t.
  BestF best{-1.0, 0.0};
  std::size_t predicted = 0, hits = 0, pos = 0;
  const double total = static_cast<double>(gold.size());
  for (double t : thresholds) {
    while (pos < items.size() && items[pos].first >= t) {
      ++predicted;
      hits += items[pos].second ? 1 : 0;
      ++pos;
    }
    const double p = predicted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted);
    const double r = static_cast<double>(hits) / total;
    const double f = f_beta(p, r, beta);
    // Thresholds descend, so >= keeps the smallest one reaching the maximum.
    if (f >= best.f) best = {f, t};
  }
  return best;
}

std::size_t count_excluded(std::span<const RankedQuery> queries) {
  return static_cast<std::size_t>(
      std::count_if(queries.begin(), queries.end(), [](const RankedQuery& q) { return q.relevant().empty(); }));
}

namespace {

void require_included(std::span<const RankedQuery> queries, const char* metric) {
  if (queries.size() == count_excluded(queries)) {
    throw ValidationError(std::string(metric) + ": no query has a relevant candidate");
  }
}

}  // namespace

double map_at_k(std::span<const RankedQuery> queries, std::size_t cutoff) {
  if (cutoff == 0) throw ValidationError("map_at_k: cutoff must be positive");
  require_included(queries, "map_at_k");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& q : queries) {
    const auto& ranks = q.relevant_ranks();
    if (ranks.empty()) continue;
    double ap = 0.0;
    for (std::size_t i = 0; i < ranks.size() && ranks[i] <= cutoff; ++i) {
      ap += static_cast<double>(i + 1) / static_cast<double>(ranks[i]);
    }
    total += ap / static_cast<double>(ranks.size());
    ++n;
  }
  return total / static_cast<double>(n);
}

double mrr(std::span<const RankedQuery> queries) {
  require_included(queries, "mrr");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& q : queries) {
    if (q.relevant_ranks().empty()) continue;
    total += 1.0 / static_cast<double>(q.relevant_ranks().front());
    ++n;
  }
  return total / static_cast<double>(n);
}

double precision_at_k(std::span<const RankedQuery> queries, std::size_t k) {
  if (k == 0) throw ValidationError("precision_at_k: K must be positive");
  require_included(queries, "precision_at_k");
  std::size_t hits = 0, relevant = 0;
  for (const auto& q : queries) {
    const auto& ranks = q.relevant_ranks();
    relevant += ranks.size();
    hits += static_cast<std::size_t>(std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; }));
  }
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

namespace {

std::string beta_key(double beta) {
  std::ostringstream out;
  out << "f" << beta;
  return out.str();
}

}  // namespace

MetricSummary summarize_ranking(std::span<const RankedQuery> queries, const MetricConfig& config) {
  MetricSummary s;
  s.queries = queries.size();
  s.excluded = count_excluded(queries);
  s.values["map" + std::to_string(config.map_cutoff)] = map_at_k(queries, config.map_cutoff);
  s.values["mrr"] = mrr(queries);
  for (std::size_t k : config.ks) s.values["p" + std::to_string(k)] = precision_at_k(queries, k);
  return s;
}

MetricSummary summarize(std::span<const RankedQuery> queries, std::span<const ScoredLink> scored,
                        const std::set<Link>& gold, const MetricConfig& config) {
  MetricSummary s = summarize_ranking(queries, config);
  for (double beta : config.betas) {
    const auto best = best_f_over_thresholds(scored, gold, beta);
    s.values[beta_key(beta)] = best.f;
    s.values[beta_key(beta) + "_threshold"] = best.threshold;
  }
  return s;
}

}  // namespace tracer
