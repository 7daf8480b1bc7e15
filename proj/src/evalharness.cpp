#include "tracer/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "tracer/error.hpp"
#include "tracer/hash.hpp"
#include "tracer/rng.hpp"

namespace tracer {

using nlohmann::json;

void NeuralPairModel::prepare(const TextSet& sources, const TextSet& targets) {
  source_tokens_.clear();
  target_tokens_.clear();
  for (const auto& t : sources.texts) source_tokens_.push_back(vocab_.tokenize(t));
  for (const auto& t : targets.texts) target_tokens_.push_back(vocab_.tokenize(t));
  source_vecs_.clear();
  target_vecs_.clear();
  if (scorer_.model().architecture == Architecture::Single) return;
  source_vecs_.resize(source_tokens_.size());
  target_vecs_.resize(target_tokens_.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < static_cast<long long>(source_tokens_.size()); ++i) {
    source_vecs_[i] = scorer_.embed(source_tokens_[i], Side::NL);
  }
#pragma omp parallel for schedule(dynamic, 4)
  for (long long j = 0; j < static_cast<long long>(target_tokens_.size()); ++j) {
    target_vecs_[j] = scorer_.embed(target_tokens_[j], Side::PL);
  }
}

double NeuralPairModel::score(std::size_t source, std::size_t target) const {
  if (scorer_.model().architecture == Architecture::Single) {
    return scorer_.score(source_tokens_.at(source), target_tokens_.at(target));
  }
  return scorer_.score_embedded(source_vecs_.at(source), target_vecs_.at(target));
}

void OraclePairModel::prepare(const TextSet& sources, const TextSet& targets) {
  sources_ = sources;
  targets_ = targets;
}

double OraclePairModel::score(std::size_t source, std::size_t target) const {
  return gold_.contains({sources_.ids.at(source), targets_.ids.at(target)}) ? 1.0 : 0.0;
}

void RandomPairModel::prepare(const TextSet& sources, const TextSet& targets) {
  source_keys_.clear();
  target_keys_.clear();
  for (const auto& id : sources.ids) source_keys_.push_back(fnv1a64(id));
  for (const auto& id : targets.ids) target_keys_.push_back(mix_seed(fnv1a64(id), 1));
}

double RandomPairModel::score(std::size_t source, std::size_t target) const {
  Rng rng(mix_seed(seed_, source_keys_.at(source) ^ target_keys_.at(target)));
  return rng.uniform();
}

void EvalProtocol::validate() const {
  if (pool_size < 2) throw ConfigError("protocol: pool_size must be at least 2");
  if (query_limit && *query_limit == 0) throw ConfigError("protocol: query_limit must be positive");
}

namespace {

std::string_view mode_name(EvalMode mode) { return mode == EvalMode::Trace ? "trace" : "code_search"; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

const Artifact& require_nl(const Project& p, const std::string& id) {
  const auto* a = p.find_nl(id);
  if (!a) throw ValidationError("project " + p.name + " has no NL artifact " + id);
  return *a;
}

const Artifact& require_pl(const Project& p, const std::string& id) {
  const auto* a = p.find_pl(id);
  if (!a) throw ValidationError("project " + p.name + " has no PL artifact " + id);
  return *a;
}

}  // namespace

json report_to_json(const EvalReport& r) {
  json protocol = {{"mode", mode_name(r.protocol.mode)}, {"seed", r.protocol.seed}};
  if (r.protocol.mode == EvalMode::CodeSearch) {
    protocol["pool_size"] = r.protocol.pool_size;
    protocol["query_limit"] = r.protocol.query_limit ? json(*r.protocol.query_limit) : json(nullptr);
  }
  return {{"model", r.model},
          {"protocol", protocol},
          {"metrics", r.metrics.values},
          {"queries", r.metrics.queries},
          {"excluded_queries", r.metrics.excluded},
          {"sources", r.sources},
          {"targets", r.targets},
          {"candidates", r.candidates},
          {"encoder_calls", r.encoder_calls}};
}

namespace {

double metric_or_nan(const EvalReport& r, const std::string& key) {
  const auto it = r.metrics.values.find(key);
  return it == r.metrics.values.end() ? std::nan("") : it->second;
}

const std::vector<std::pair<std::string, std::string>> kColumns = {
    {"f1", "F1"}, {"f2", "F2"}, {"map3", "MAP"}, {"mrr", "MRR"},
    {"p1", "Pr@1"}, {"p2", "Pr@2"}, {"p3", "Pr@3"}};

}  // namespace

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "model,mode";
  for (const auto& [key, label] : kColumns) out << "," << key;
  out << ",queries,excluded_queries,candidates,encoder_calls\n";
  out << r.model << "," << mode_name(r.protocol.mode);
  char buf[32];
  for (const auto& [key, label] : kColumns) {
    std::snprintf(buf, sizeof(buf), "%.6f", metric_or_nan(r, key));
    out << "," << buf;
  }
  out << "," << r.metrics.queries << "," << r.metrics.excluded << "," << r.candidates << ","
      << r.encoder_calls << "\n";
  return out.str();
}

std::string report_to_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-16s", "Model");
  out << buf;
  for (const auto& [key, label] : kColumns) {
    std::snprintf(buf, sizeof(buf), " %7s", label.c_str());
    out << buf;
  }
  out << "\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%-16s", r.model.c_str());
    out << buf;
    for (const auto& [key, label] : kColumns) {
      std::snprintf(buf, sizeof(buf), " %7.3f", metric_or_nan(r, key));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

EvalReport evaluate_grid(PairModel& model, const TextSet& sources, const TextSet& targets,
                         const std::set<Link>& gold) {
  if (sources.size() == 0 || targets.size() == 0) throw ValidationError("evaluate_grid: empty side");
  const auto start = Clock::now();
  const auto calls_before = model.encoder_calls();
  model.prepare(sources, targets);
  const std::size_t ns = sources.size(), nt = targets.size();
  std::vector<double> grid(ns * nt);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < static_cast<long long>(ns); ++i) {
    for (std::size_t j = 0; j < nt; ++j) grid[static_cast<std::size_t>(i) * nt + j] = model.score(i, j);
  }

  std::set<Link> grid_gold;
  std::vector<RankedQuery> queries;
  std::vector<ScoredLink> scored;
  scored.reserve(ns * nt);
  for (std::size_t i = 0; i < ns; ++i) {
    std::vector<std::pair<std::string, double>> cands;
    std::set<std::string> relevant;
    for (std::size_t j = 0; j < nt; ++j) {
      const double s = grid[i * nt + j];
      cands.emplace_back(targets.ids[j], s);
      scored.push_back({sources.ids[i], targets.ids[j], s});
      if (gold.contains({sources.ids[i], targets.ids[j]})) {
        relevant.insert(targets.ids[j]);
        grid_gold.insert({sources.ids[i], targets.ids[j]});
      }
    }
    queries.emplace_back(sources.ids[i], std::move(cands), std::move(relevant));
  }
  EvalReport report;
  report.model = model.name();
  report.metrics = summarize(queries, scored, grid_gold);
  report.sources = ns;
  report.targets = nt;
  report.candidates = ns * nt;
  report.encoder_calls = model.encoder_calls() - calls_before;
  report.wall_seconds = seconds_since(start);
  return report;
}

EvalReport trace_eval(PairModel& model, const Project& project, const SplitSpec& split,
                      const EvalProtocol& protocol) {
  const auto links = split.test_links();
  if (links.empty()) throw ValidationError("trace_eval: test fold is empty");
  std::set<std::string> src_ids, tgt_ids;
  for (const auto& l : links) {
    src_ids.insert(l.source);
    tgt_ids.insert(l.target);
  }
  TextSet sources, targets;
  for (const auto& id : src_ids) {
    sources.ids.push_back(id);
    sources.texts.push_back(require_nl(project, id).text());
  }
  for (const auto& id : tgt_ids) {
    targets.ids.push_back(id);
    targets.texts.push_back(require_pl(project, id).text());
  }
  auto report = evaluate_grid(model, sources, targets, project.gold.links);
  report.protocol = protocol;
  report.protocol.mode = EvalMode::Trace;
  return report;
}

std::vector<std::string> code_search_pool(const std::string& query_id, const std::string& gold_target,
                                          const std::vector<std::string>& universe,
                                          const std::set<std::string>& excluded, std::size_t pool_size,
                                          std::uint64_t seed) {
  std::vector<std::string> free;
  for (const auto& t : universe) {
    if (t != gold_target && !excluded.contains(t)) free.push_back(t);
  }
  if (free.size() + 1 < pool_size) {
    throw ValidationError("code search: pool of " + std::to_string(pool_size) + " needs " +
                          std::to_string(pool_size - 1) + " distractors but only " +
                          std::to_string(free.size()) + " functions are available");
  }
  Rng rng(mix_seed(seed, fnv1a64(query_id)));
  std::vector<std::string> pool{gold_target};
  for (std::size_t i = 0; i + 1 < pool_size; ++i) {
    std::swap(free[i], free[i + rng.index(free.size() - i)]);
    pool.push_back(free[i]);
  }
  return pool;
}

EvalReport code_search_eval(PairModel& model, const Project& project, const SplitSpec& split,
                            const EvalProtocol& protocol) {
  protocol.validate();
  const auto links = split.test_links();
  if (links.empty()) throw ValidationError("code_search_eval: test fold is empty");
  std::map<std::string, std::vector<std::string>> targets_of;
  std::set<std::string> universe_set;
  for (const auto& l : links) {
    targets_of[l.source].push_back(l.target);
    universe_set.insert(l.target);
  }
  const std::vector<std::string> universe(universe_set.begin(), universe_set.end());
  if (protocol.pool_size > universe.size()) {
    throw ValidationError("code search: pool_size " + std::to_string(protocol.pool_size) + " exceeds the " +
                          std::to_string(universe.size()) + " available functions");
  }
  std::vector<std::string> query_ids;
  for (const auto& [q, t] : targets_of) query_ids.push_back(q);
  if (protocol.query_limit && *protocol.query_limit < query_ids.size()) {
    Rng rng(mix_seed(protocol.seed, fnv1a64("query_limit")));
    for (std::size_t i = 0; i < *protocol.query_limit; ++i) {
      std::swap(query_ids[i], query_ids[i + rng.index(query_ids.size() - i)]);
    }
    query_ids.resize(*protocol.query_limit);
    std::sort(query_ids.begin(), query_ids.end());
  }

  const auto start = Clock::now();
  const auto calls_before = model.encoder_calls();
  TextSet sources, targets;
  for (const auto& q : query_ids) {
    sources.ids.push_back(q);
    sources.texts.push_back(require_nl(project, q).text());
  }
  std::map<std::string, std::size_t> target_index;
  for (const auto& t : universe) {
    target_index.emplace(t, targets.ids.size());
    targets.ids.push_back(t);
    targets.texts.push_back(require_pl(project, t).text());
  }
  model.prepare(sources, targets);

  const std::size_t nq = query_ids.size();
  std::vector<std::vector<std::pair<std::string, double>>> pools(nq);
  std::vector<std::string> gold_targets(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    auto golds = targets_of.at(query_ids[i]);
    std::sort(golds.begin(), golds.end());
    gold_targets[i] = golds.front();
    const std::set<std::string> excluded(golds.begin(), golds.end());
    for (const auto& t : code_search_pool(query_ids[i], gold_targets[i], universe, excluded,
                                          protocol.pool_size, protocol.seed)) {
      pools[i].emplace_back(t, 0.0);
    }
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < static_cast<long long>(nq); ++i) {
    for (auto& [t, s] : pools[i]) s = model.score(i, target_index.at(t));
  }

  std::vector<RankedQuery> queries;
  std::vector<ScoredLink> scored;
  std::set<Link> gold;
  for (std::size_t i = 0; i < nq; ++i) {
    for (const auto& [t, s] : pools[i]) scored.push_back({query_ids[i], t, s});
    gold.insert({query_ids[i], gold_targets[i]});
    queries.emplace_back(query_ids[i], std::move(pools[i]), std::set<std::string>{gold_targets[i]});
  }
  EvalReport report;
  report.model = model.name();
  report.protocol = protocol;
  report.protocol.mode = EvalMode::CodeSearch;
  report.metrics = summarize(queries, scored, gold);
  report.sources = nq;
  report.targets = universe.size();
  report.candidates = nq * protocol.pool_size;
  report.encoder_calls = model.encoder_calls() - calls_before;
  report.wall_seconds = seconds_since(start);
  return report;
}

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string fresh_word(Rng& rng, std::size_t syllables, std::set<std::string>& used) {
  for (;;) {
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kConsonants[rng.index(kConsonants.size())];
      w += kVowels[rng.index(kVowels.size())];
    }
    if (used.insert(w).second) return w;
  }
}

struct Lexicon {
  std::vector<PlantedConcept> concepts;
  std::vector<std::string> nl_filler, pl_filler, shared;
};

Lexicon make_lexicon(const PlantedProfile& p) {
  Rng rng(p.vocab_seed);
  std::set<std::string> used = {"def", "return", "self", "none", "pass", "update", "fix", "when"};
  Lexicon lex;
  for (std::size_t c = 0; c < p.concepts; ++c) {
    PlantedConcept concept_words;
    concept_words.nl_word = fresh_word(rng, 3, used);
    concept_words.pl_synonym = fresh_word(rng, 3, used);
    lex.concepts.push_back(std::move(concept_words));
  }
  for (int i = 0; i < 40; ++i) lex.nl_filler.push_back(fresh_word(rng, 2, used));
  for (int i = 0; i < 40; ++i) lex.pl_filler.push_back(fresh_word(rng, 2, used));
  for (int i = 0; i < 12; ++i) lex.shared.push_back(fresh_word(rng, 2, used));
  return lex;
}

std::string join(const std::vector<std::string>& words, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

std::string padded_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, n);
  return buf;
}

}  // namespace

std::vector<PlantedConcept> planted_concepts(const PlantedProfile& profile) {
  return make_lexicon(profile).concepts;
}

Project make_planted_corpus(std::size_t n_pairs, const PlantedProfile& profile, double noise,
                            std::uint64_t seed) {
  if (n_pairs < 10) throw ValidationError("planted corpus: at least 10 pairs are required");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ValidationError("planted corpus: noise must lie in [0, 1]");
  if (profile.keys_per_pair == 0 || profile.keys_per_pair > profile.concepts) {
    throw ValidationError("planted corpus: keys_per_pair must lie in [1, concepts]");
  }
  const auto lex = make_lexicon(profile);
  Rng rng(seed);
  const bool trace = profile.kind == PlantedKind::Trace;
  const char nl_prefix = trace ? 'I' : 'D';
  const char pl_prefix = trace ? 'C' : 'F';

  std::vector<std::size_t> pl_number(n_pairs);
  std::iota(pl_number.begin(), pl_number.end(), 0);
  rng.shuffle(std::span<std::size_t>(pl_number));

  Project project;
  project.name = trace ? "planted-trace" : "planted-codesearch";
  project.gold.provenance = Provenance::DatasetGiven;
  std::vector<std::size_t> concept_ids(profile.concepts);
  std::iota(concept_ids.begin(), concept_ids.end(), 0);
  auto pick = [&](const std::vector<std::string>& words) { return words[rng.index(words.size())]; };

  for (std::size_t i = 0; i < n_pairs; ++i) {
    for (std::size_t k = 0; k < profile.keys_per_pair; ++k) {
      std::swap(concept_ids[k], concept_ids[k + rng.index(concept_ids.size() - k)]);
    }
    std::vector<std::string> nl_words, pl_keys;
    for (std::size_t k = 0; k < profile.keys_per_pair; ++k) {
      const auto& c = lex.concepts[concept_ids[k]];
      nl_words.push_back(c.nl_word);
      pl_keys.push_back(rng.bernoulli(noise) ? c.pl_synonym : c.nl_word);
    }
    for (std::size_t f = 0; f < profile.nl_filler; ++f) nl_words.push_back(pick(lex.nl_filler));
    nl_words.push_back(pick(lex.shared));
    rng.shuffle(std::span<std::string>(nl_words));

    Artifact nl{padded_id(nl_prefix, i), ArtifactKind::NL, {}, 0};
    Artifact pl{padded_id(pl_prefix, pl_number[i]), ArtifactKind::PL, {}, 0};
    std::vector<std::string> lines;
    const std::string marker = trace ? "+" : "";
    lines.push_back(marker + "def " + pick(lex.pl_filler) + "(self):");
    std::size_t fillers_used = 1;
    for (const auto& key : pl_keys) {
      lines.push_back(marker + "    " + key + " = " + pick(lex.pl_filler));
      ++fillers_used;
    }
    while (fillers_used < profile.pl_filler) {
      lines.push_back(marker + "    " + pick(lex.pl_filler) + " = " + pick(lex.shared));
      ++fillers_used;
    }
    lines.push_back(marker + "    return " + pick(lex.shared));
    if (trace) lines.push_back("-    return None");
    std::string code;
    for (const auto& l : lines) code += l + "\n";

    if (trace) {
      const std::size_t cut = std::min<std::size_t>(3, nl_words.size());
      nl.segments = {{"summary", join(nl_words, 0, cut)}, {"description", join(nl_words, cut, nl_words.size())}};
      pl.segments = {{"commit_message", "update " + pick(lex.pl_filler)}, {"diff", code}};
      pl.loc = count_diff_loc(code);
    } else {
      nl.segments = {{"docstring", join(nl_words, 0, nl_words.size())}};
      pl.segments = {{"code", code}};
    }
    project.gold.links.insert({nl.id, pl.id});
    project.nl.push_back(std::move(nl));
    project.pl.push_back(std::move(pl));
  }
  std::sort(project.pl.begin(), project.pl.end(), [](const Artifact& a, const Artifact& b) { return a.id < b.id; });
  return project;
}

}  // namespace tracer
