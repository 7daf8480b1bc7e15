#pragma once

// Brute-force metric oracles. They recompute every quantity from raw
// (query, candidate, score) triples by direct counting, without RankedQuery
// or the threshold walk used by the library.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "tracer/metrics.hpp"
#include "tracer/rng.hpp"

namespace tracer::testing {

struct RawQuery {
  std::string id;
  std::vector<std::pair<std::string, double>> candidates;
  std::set<std::string> relevant;
};

struct RawInstance {
  std::vector<RawQuery> queries;

  std::vector<RankedQuery> ranked() const {
    std::vector<RankedQuery> out;
    for (const auto& q : queries) out.emplace_back(q.id, q.candidates, q.relevant);
    return out;
  }
  std::vector<ScoredLink> scored() const {
    std::vector<ScoredLink> out;
    for (const auto& q : queries) {
      for (const auto& [t, s] : q.candidates) out.push_back({q.id, t, s});
    }
    return out;
  }
  std::set<Link> gold() const {
    std::set<Link> out;
    for (const auto& q : queries) {
      for (const auto& t : q.relevant) out.insert({q.id, t});
    }
    return out;
  }
};

// 1-based position of `target` when candidates are ordered by descending
// score, ties by ascending id.
inline std::size_t oracle_rank(const RawQuery& q, const std::string& target) {
  double score = 0;
  for (const auto& [t, s] : q.candidates) {
    if (t == target) score = s;
  }
  std::size_t ahead = 0;
  for (const auto& [t, s] : q.candidates) {
    if (s > score || (s == score && t < target)) ++ahead;
  }
  return ahead + 1;
}

inline bool oracle_relevant_at(const RawQuery& q, std::size_t rank) {
  for (const auto& t : q.relevant) {
    if (oracle_rank(q, t) == rank) return true;
  }
  return false;
}

inline double oracle_map(const RawInstance& inst, std::size_t cutoff) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& q : inst.queries) {
    if (q.relevant.empty()) continue;
    double ap = 0;
    std::size_t seen = 0;
    for (std::size_t r = 1; r <= std::min(cutoff, q.candidates.size()); ++r) {
      if (oracle_relevant_at(q, r)) {
        ++seen;
        ap += static_cast<double>(seen) / static_cast<double>(r);
      }
    }
    total += ap / static_cast<double>(q.relevant.size());
    ++n;
  }
  return total / static_cast<double>(n);
}

inline double oracle_mrr(const RawInstance& inst) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& q : inst.queries) {
    if (q.relevant.empty()) continue;
    std::size_t first = std::numeric_limits<std::size_t>::max();
    for (const auto& t : q.relevant) first = std::min(first, oracle_rank(q, t));
    total += 1.0 / static_cast<double>(first);
    ++n;
  }
  return total / static_cast<double>(n);
}

inline double oracle_precision_at(const RawInstance& inst, std::size_t k) {
  std::size_t hits = 0, relevant = 0;
  for (const auto& q : inst.queries) {
    for (const auto& t : q.relevant) {
      ++relevant;
      if (oracle_rank(q, t) <= k) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

// Tries every candidate threshold independently and counts predictions
// from scratch each time.
inline BestF oracle_best_f(const RawInstance& inst, double beta) {
  const auto gold = inst.gold();
  std::set<double> thresholds{0.0, 1.0};
  for (const auto& q : inst.queries) {
    for (const auto& c : q.candidates) thresholds.insert(c.second);
  }
  BestF best{-1.0, 0.0};
  for (double t : thresholds) {
    std::size_t predicted = 0, hits = 0;
    for (const auto& q : inst.queries) {
      for (const auto& [target, s] : q.candidates) {
        if (s >= t) {
          ++predicted;
          if (q.relevant.contains(target)) ++hits;
        }
      }
    }
    const double p = predicted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted);
    const double r = static_cast<double>(hits) / static_cast<double>(gold.size());
    const double b2 = beta * beta;
    const double f = (b2 * p + r) == 0.0 ? 0.0 : (1.0 + b2) * p * r / (b2 * p + r);
    // Ascending sweep: only a strictly better F moves the threshold up.
    if (f > best.f) best = {f, t};
  }
  return best;
}

// Up to 10 queries × 20 candidates. Scores come from a coarse grid so ties
// are common; at least one query has a relevant candidate.
inline RawInstance random_instance(Rng& rng) {
  RawInstance inst;
  const std::size_t nq = 1 + rng.index(10);
  bool any = false;
  for (std::size_t i = 0; i < nq; ++i) {
    RawQuery q;
    q.id = "q" + std::to_string(i);
    const std::size_t nc = 1 + rng.index(20);
    for (std::size_t j = 0; j < nc; ++j) {
      const std::string t = "t" + std::to_string(100 + j);
      q.candidates.emplace_back(t, static_cast<double>(rng.index(11)) / 10.0);
      if (rng.bernoulli(0.2)) q.relevant.insert(t);
    }
    any = any || !q.relevant.empty();
    inst.queries.push_back(std::move(q));
  }
  if (!any) inst.queries.front().relevant.insert(inst.queries.front().candidates.front().first);
  return inst;
}

}  // namespace tracer::testing
