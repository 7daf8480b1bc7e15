#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tracer/corpus.hpp"
#include "tracer/rng.hpp"

namespace tracer {

/// Indices into a TrainingPool's sorted id lists. Index order equals id
/// order, so comparing indices is the (nl_id, pl_id) tie-break.
struct ExamplePair {
  std::size_t nl = 0;
  std::size_t pl = 0;
  int label = 0;
  auto operator<=>(const ExamplePair&) const = default;
};

/// Artifacts and links available to one training run. `gold` holds every
/// known link between pool members, not only the training ones, so that
/// no true link is ever used as a negative.
struct TrainingPool {
  std::vector<std::string> nl_ids;  ///< sorted, unique
  std::vector<std::string> pl_ids;  ///< sorted, unique
  std::vector<std::pair<std::size_t, std::size_t>> positives;  ///< sorted
  std::set<std::pair<std::size_t, std::size_t>> gold;

  /// Pools are the artifacts touched by `train`; `all_gold` links among
  /// them are excluded from negatives. Throws ValidationError when train
  /// is empty.
  static TrainingPool from_links(std::span<const Link> train, const std::set<Link>& all_gold);

  bool is_gold(std::size_t nl, std::size_t pl) const { return gold.contains({nl, pl}); }
  std::size_t negative_capacity() const { return nl_ids.size() * pl_ids.size() - gold.size(); }
};

/// Every positive once plus as many distinct uniform-random non-gold pairs,
/// shuffled. Throws InsufficientNegatives when the pool cannot supply them.
std::vector<ExamplePair> drns_epoch(const TrainingPool& pool, std::uint64_t seed);

/// Scores candidate (nl, pl) index pairs with the current model.
using PairScorer = std::function<std::vector<double>(std::span<const std::pair<std::size_t, std::size_t>>)>;

struct OnsCandidate {
  std::size_t nl = 0;
  std::size_t pl = 0;
  double score = 0.0;
  bool selected = false;
};

struct OnsBatch {
  std::vector<ExamplePair> pairs;  ///< positives first, then negatives
  std::vector<OnsCandidate> candidates;  ///< in selection order
  std::size_t fallback = 0;  ///< random negatives added for lack of candidates
};

/// Cross pairs of the batch's NL and PL artifacts minus gold are scored,
/// and the |positives| highest (ties by ascending (nl, pl)) become the
/// negatives. Shortfalls are filled with random non-gold pairs from the
/// whole pool. Throws ValidationError for fewer than two positives.
OnsBatch ons_batch(const TrainingPool& pool, std::span<const ExamplePair> positives,
                   const PairScorer& scorer, Rng& fallback_rng);

}  // namespace tracer
