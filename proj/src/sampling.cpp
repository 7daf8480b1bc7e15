#include "tracer/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "tracer/error.hpp"

namespace tracer {

namespace {

std::size_t index_of(const std::vector<std::string>& sorted, const std::string& id) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), id) - sorted.begin());
}

bool contains(const std::vector<std::string>& sorted, const std::string& id) {
  return std::binary_search(sorted.begin(), sorted.end(), id);
}

}  // namespace

TrainingPool TrainingPool::from_links(std::span<const Link> train, const std::set<Link>& all_gold) {
  if (train.empty()) throw ValidationError("training pool: no training links");
  TrainingPool pool;
  for (const auto& l : train) {
    pool.nl_ids.push_back(l.source);
    pool.pl_ids.push_back(l.target);
  }
  for (auto* ids : {&pool.nl_ids, &pool.pl_ids}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }
  for (const auto& l : train) {
    pool.positives.emplace_back(index_of(pool.nl_ids, l.source), index_of(pool.pl_ids, l.target));
  }
  std::sort(pool.positives.begin(), pool.positives.end());
  pool.positives.erase(std::unique(pool.positives.begin(), pool.positives.end()), pool.positives.end());
  pool.gold.insert(pool.positives.begin(), pool.positives.end());
  for (const auto& l : all_gold) {
    if (contains(pool.nl_ids, l.source) && contains(pool.pl_ids, l.target)) {
      pool.gold.emplace(index_of(pool.nl_ids, l.source), index_of(pool.pl_ids, l.target));
    }
  }
  return pool;
}

namespace {

// Draws `count` distinct non-gold pairs not in `taken`. Rejection sampling
// while the remaining space is large; enumeration otherwise.
std::vector<std::pair<std::size_t, std::size_t>> random_negatives(
    const TrainingPool& pool, std::size_t count, std::set<std::pair<std::size_t, std::size_t>>& taken,
    Rng& rng) {
  const std::size_t n_nl = pool.nl_ids.size(), n_pl = pool.pl_ids.size();
  const std::size_t grid = n_nl * n_pl;
  std::size_t blocked = pool.gold.size();
  for (const auto& t : taken) blocked += pool.is_gold(t.first, t.second) ? 0 : 1;
  if (grid - blocked < count) {
    throw InsufficientNegatives("need " + std::to_string(count) + " negatives but only " +
                                std::to_string(grid - blocked) + " non-gold pairs are available");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  if (2 * (blocked + count) <= grid) {
    while (out.size() < count) {
      const std::size_t cell = rng.index(grid);
      const std::pair<std::size_t, std::size_t> p{cell / n_pl, cell % n_pl};
      if (pool.is_gold(p.first, p.second) || taken.contains(p)) continue;
      taken.insert(p);
      out.push_back(p);
    }
    return out;
  }
  std::vector<std::pair<std::size_t, std::size_t>> free;
  for (std::size_t i = 0; i < n_nl; ++i) {
    for (std::size_t j = 0; j < n_pl; ++j) {
      if (!pool.is_gold(i, j) && !taken.contains({i, j})) free.emplace_back(i, j);
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(free[i], free[i + rng.index(free.size() - i)]);
    taken.insert(free[i]);
    out.push_back(free[i]);
  }
  return out;
}

}  // namespace

std::vector<ExamplePair> drns_epoch(const TrainingPool& pool, std::uint64_t seed) {
  if (pool.positives.empty()) throw ValidationError("drns_epoch: no positives");
  Rng rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> taken;
  const auto negatives = random_negatives(pool, pool.positives.size(), taken, rng);
  std::vector<ExamplePair> out;
  out.reserve(2 * pool.positives.size());
  for (const auto& [nl, pl] : pool.positives) out.push_back({nl, pl, 1});
  for (const auto& [nl, pl] : negatives) out.push_back({nl, pl, 0});
  rng.shuffle(std::span<ExamplePair>(out));
  return out;
}

OnsBatch ons_batch(const TrainingPool& pool, std::span<const ExamplePair> positives,
                   const PairScorer& scorer, Rng& fallback_rng) {
  if (positives.size() < 2) throw ValidationError("ons_batch: need at least two positives");
  std::vector<std::size_t> nls, pls;
  for (const auto& p : positives) {
    if (p.label != 1 || !pool.is_gold(p.nl, p.pl)) {
      throw ValidationError("ons_batch: batch member is not a gold positive");
    }
    nls.push_back(p.nl);
    pls.push_back(p.pl);
  }
  for (auto* v : {&nls, &pls}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i : nls) {
    for (std::size_t j : pls) {
      if (!pool.is_gold(i, j)) cells.emplace_back(i, j);
    }
  }

  OnsBatch batch;
  const std::size_t want = positives.size();
  for (const auto& p : positives) batch.pairs.push_back(p);
  if (!cells.empty()) {
    const auto scores = scorer(std::span<const std::pair<std::size_t, std::size_t>>(cells));
    if (scores.size() != cells.size()) throw ValidationError("ons_batch: scorer returned wrong count");
    if (!std::all_of(scores.begin(), scores.end(), [](double s) { return std::isfinite(s); })) {
      throw NumericalError("ons_batch: candidate score is not finite");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      batch.candidates.push_back({cells[c].first, cells[c].second, scores[c], false});
    }
    // cells are already in (nl, pl) order, so a stable sort keeps that tie-break.
    std::stable_sort(batch.candidates.begin(), batch.candidates.end(),
                     [](const OnsCandidate& a, const OnsCandidate& b) { return a.score > b.score; });
  }
  std::set<std::pair<std::size_t, std::size_t>> taken;
  for (auto& c : batch.candidates) {
    if (batch.pairs.size() == 2 * want) break;
    c.selected = true;
    taken.emplace(c.nl, c.pl);
    batch.pairs.push_back({c.nl, c.pl, 0});
  }
  const std::size_t missing = 2 * want - batch.pairs.size();
  if (missing > 0) {
    for (const auto& c : batch.candidates) taken.emplace(c.nl, c.pl);
    for (const auto& [nl, pl] : random_negatives(pool, missing, taken, fallback_rng)) {
      batch.pairs.push_back({nl, pl, 0});
    }
    batch.fallback = missing;
  }
  return batch;
}

}  // namespace tracer
