#include "tracer/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "tracer/error.hpp"
#include "tracer/optim.hpp"

namespace tracer {

std::string_view to_string(Sampler sampler) { return sampler == Sampler::Drns ? "drns" : "ons"; }

std::string_view to_string(Phase phase) {
  return phase == Phase::Intermediate ? "intermediate" : "finetune";
}

Sampler parse_sampler(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "drns") return Sampler::Drns;
  if (lower == "ons") return Sampler::Ons;
  throw ConfigError("unknown sampler '" + std::string(name) + "' (expected drns or ons)");
}

TrainConfig TrainConfig::defaults(Phase phase) {
  TrainConfig c;
  c.epochs = phase == Phase::Intermediate ? 8 : 400;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 4 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be even and at least 4 for balanced batches");
  }
  if (accumulation_steps == 0) throw ConfigError("accumulation_steps must be positive");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (epochs == 0 && max_steps == 0) throw ConfigError("either epochs or max_steps must be positive");
  if (eval_interval_steps == 0) throw ConfigError("eval_interval_steps must be positive");
  if (dev_sample_size == 0) throw ConfigError("dev_sample_size must be positive");
}

TrainSet make_train_set(const Project& project, const SplitSpec& split, const Vocab& vocab,
                        std::size_t dev_sample_size, std::uint64_t seed) {
  const auto train_links = split.train_links();
  if (train_links.empty()) throw ValidationError("training split has no links");
  TrainSet data;
  data.pool = TrainingPool::from_links(train_links, project.gold.links);
  auto tokens_of = [&](const Artifact* a, const std::string& id) {
    if (!a) throw ValidationError("project " + project.name + " has no artifact " + id);
    return vocab.tokenize(a->text());
  };
  for (const auto& id : data.pool.nl_ids) data.nl_tokens.push_back(tokens_of(project.find_nl(id), id));
  for (const auto& id : data.pool.pl_ids) data.pl_tokens.push_back(tokens_of(project.find_pl(id), id));

  auto dev = split.dev_links();
  if (dev.empty()) throw ValidationError("dev split has no links");
  Rng rng(mix_seed(seed, 0xde5));
  const std::size_t take = std::min(dev_sample_size, dev.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(dev[i], dev[i + rng.index(dev.size() - i)]);
  dev.resize(take);
  std::set<std::string> sources, targets;
  for (const auto& l : dev) {
    sources.insert(l.source);
    targets.insert(l.target);
  }
  for (const auto& id : sources) {
    data.dev_source_ids.push_back(id);
    data.dev_source_tokens.push_back(tokens_of(project.find_nl(id), id));
  }
  for (const auto& id : targets) {
    data.dev_target_ids.push_back(id);
    data.dev_target_tokens.push_back(tokens_of(project.find_pl(id), id));
  }
  for (const auto& l : project.gold.links) {
    if (sources.contains(l.source) && targets.contains(l.target)) data.dev_gold.insert(l);
  }
  return data;
}

EvalPoint evaluate_dev(const RelModel<float>& model, const TrainSet& data) {
  RelScorer scorer(model);
  const auto grid = scorer.score_grid(data.dev_source_tokens, data.dev_target_tokens);
  std::vector<RankedQuery> queries;
  std::vector<ScoredLink> scored;
  for (std::size_t i = 0; i < data.dev_source_ids.size(); ++i) {
    std::vector<std::pair<std::string, double>> cands;
    std::set<std::string> relevant;
    for (std::size_t j = 0; j < data.dev_target_ids.size(); ++j) {
      const auto& src = data.dev_source_ids[i];
      const auto& tgt = data.dev_target_ids[j];
      cands.emplace_back(tgt, grid(i, j));
      scored.push_back({src, tgt, grid(i, j)});
      if (data.dev_gold.contains({src, tgt})) relevant.insert(tgt);
    }
    queries.emplace_back(data.dev_source_ids[i], std::move(cands), std::move(relevant));
  }
  return {0, map_at_k(queries, 3), best_f_over_thresholds(scored, data.dev_gold, 2.0).f};
}

std::string TrainHistory::to_csv() const {
  std::map<std::size_t, const EvalPoint*> at;
  for (const auto& e : evals) at[e.step] = &e;
  std::ostringstream out;
  out << "step,loss,lr,dev_map3,dev_f2\n";
  char buf[128];
  for (std::size_t i = 0; i < loss.size(); ++i) {
    const std::size_t step = i + 1;
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g", step, loss[i], lr[i]);
    out << buf;
    if (const auto it = at.find(step); it != at.end()) {
      std::snprintf(buf, sizeof(buf), ",%.9g,%.9g", it->second->map3, it->second->f2);
      out << buf;
    } else {
      out << ",,";
    }
    out << "\n";
  }
  return out.str();
}

namespace {

class ExampleStream {
 public:
  ExampleStream(const TrainSet& data, const TrainConfig& config, Rng& fallback_rng)
      : data_(data), config_(config), fallback_rng_(fallback_rng) {}

  // Next micro-batch of batch_size examples.
  std::vector<ExamplePair> next(const RelModel<float>& model, std::size_t& fallbacks) {
    if (config_.sampler == Sampler::Drns) {
      std::vector<ExamplePair> out;
      while (out.size() < config_.batch_size) {
        if (cursor_ == epoch_.size()) {
          epoch_ = drns_epoch(data_.pool, mix_seed(config_.seed, 100 + epoch_index_++));
          cursor_ = 0;
        }
        out.push_back(epoch_[cursor_++]);
      }
      return out;
    }
    const std::size_t want = config_.batch_size / 2;
    std::vector<ExamplePair> positives;
    while (positives.size() < want) {
      if (cursor_ == order_.size()) {
        order_.clear();
        for (const auto& [nl, pl] : data_.pool.positives) order_.push_back({nl, pl, 1});
        Rng rng(mix_seed(config_.seed, 100 + epoch_index_++));
        rng.shuffle(std::span<ExamplePair>(order_));
        cursor_ = 0;
      }
      positives.push_back(order_[cursor_++]);
    }
    auto batch = ons_batch(data_.pool, positives, scorer_for(model), fallback_rng_);
    fallbacks += batch.fallback;
    return std::move(batch.pairs);
  }

 private:
  PairScorer scorer_for(const RelModel<float>& model) const {
    return [this, &model](std::span<const std::pair<std::size_t, std::size_t>> cells) {
      std::vector<double> out;
      out.reserve(cells.size());
      if (model.architecture == Architecture::Single) {
        for (const auto& [nl, pl] : cells) {
          out.push_back(score_pair(model, data_.nl_tokens[nl], data_.pl_tokens[pl]));
        }
        return out;
      }
      std::map<std::size_t, FeatureVector<float>> u, v;
      for (const auto& [nl, pl] : cells) {
        if (!u.contains(nl)) u.emplace(nl, embed(model, data_.nl_tokens[nl], Side::NL));
        if (!v.contains(pl)) v.emplace(pl, embed(model, data_.pl_tokens[pl], Side::PL));
        out.push_back(score_embedded(model, u.at(nl), v.at(pl)));
      }
      return out;
    };
  }

  const TrainSet& data_;
  const TrainConfig& config_;
  Rng& fallback_rng_;
  std::vector<ExamplePair> epoch_;
  std::vector<ExamplePair> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_index_ = 0;
};

std::vector<Matrix<float>*> pointers(const std::vector<std::pair<std::string, Matrix<float>*>>& named) {
  std::vector<Matrix<float>*> out;
  for (const auto& [n, m] : named) out.push_back(m);
  return out;
}

}  // namespace

TrainResult train_phase(RelModel<float> model, const TrainSet& data, const TrainConfig& config, Phase phase,
                        const EvalCallback& on_eval) {
  config.validate();
  model.validate();
  if (data.pool.positives.empty()) throw ValidationError("train_phase: empty training set");

  const std::size_t examples_per_epoch = 2 * data.pool.positives.size();
  const std::size_t per_step = config.batch_size * config.accumulation_steps;
  const std::size_t total_steps =
      config.max_steps > 0 ? config.max_steps : (config.epochs * examples_per_epoch + per_step - 1) / per_step;

  TrainResult result{model, model, {}};
  auto& history = result.history;
  history.phase = phase;
  history.total_steps = total_steps;

  auto grads = RelModel<float>::zeros_like(model);
  const auto params = pointers(model.trainable_tensors());
  const auto grad_ptrs = pointers(grads.trainable_tensors());
  const std::vector<const Matrix<float>*> grad_const(grad_ptrs.begin(), grad_ptrs.end());
  auto adam = make_adam_state<float>(std::span<Matrix<float>* const>(params));

  Rng dropout_rng(mix_seed(config.seed, 3));
  Rng fallback_rng(mix_seed(config.seed, 4));
  ExampleStream stream(data, config, fallback_rng);
  const float scale = 1.0f / static_cast<float>(per_step);
  double best_map = -1.0;
  std::size_t evals_since_best = 0;

  for (std::size_t step = 1; step <= total_steps; ++step) {
    for (auto* g : grad_ptrs) g->fill(0.0f);
    double loss = 0.0;
    for (std::size_t micro = 0; micro < config.accumulation_steps; ++micro) {
      for (const auto& ex : stream.next(model, history.ons_fallbacks)) {
        loss += example_loss<float>(model, data.nl_tokens[ex.nl], data.pl_tokens[ex.pl], ex.label, &grads,
                                    true, &dropout_rng, scale);
      }
    }
    loss /= static_cast<double>(per_step);
    if (!std::isfinite(loss)) {
      history.diverged = true;
      history.divergence = "loss became " + std::to_string(loss) + " at step " + std::to_string(step);
      spdlog::error("training stopped: {}", history.divergence);
      break;
    }
    const double lr = lr_at(step - 1, total_steps, config.lr0);
    try {
      adam_step<float>(std::span<Matrix<float>* const>(params), std::span<const Matrix<float>* const>(grad_const),
                       adam, lr);
    } catch (const NumericalError& e) {
      history.diverged = true;
      history.divergence = std::string(e.what()) + " at step " + std::to_string(step);
      spdlog::error("training stopped: {}", history.divergence);
      break;
    }
    history.loss.push_back(loss);
    history.lr.push_back(lr);

    if (step % config.eval_interval_steps == 0 || step == total_steps) {
      auto point = evaluate_dev(model, data);
      point.step = step;
      history.evals.push_back(point);
      spdlog::info("{} step {}/{}: loss {:.4f} dev MAP@3 {:.4f} F2 {:.4f}", to_string(phase), step, total_steps,
                   loss, point.map3, point.f2);
      if (on_eval) on_eval(point);
      if (point.map3 > best_map) {
        best_map = point.map3;
        history.best_step = step;
        result.best = model;
        evals_since_best = 0;
      } else if (config.early_stop_evals > 0 && ++evals_since_best >= config.early_stop_evals) {
        history.early_stopped = true;
        spdlog::info("early stop after {} evaluations without improvement", evals_since_best);
        break;
      }
    }
  }
  result.last = model;
  if (history.best_step == 0) result.best = result.last;
  return result;
}

}  // namespace tracer
