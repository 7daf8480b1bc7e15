#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tracer/corpus.hpp"
#include "tracer/metrics.hpp"
#include "tracer/relhead.hpp"
#include "tracer/sampling.hpp"

namespace tracer {

enum class Sampler { Drns, Ons };
enum class Phase { Intermediate, Finetune };

std::string_view to_string(Sampler sampler);
std::string_view to_string(Phase phase);
/// "drns" or "ons", any case. Throws ConfigError.
Sampler parse_sampler(std::string_view name);

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t accumulation_steps = 8;
  double lr0 = 1e-5;
  std::size_t epochs = 400;
  /// When non-zero, the run length in optimizer steps; epochs are ignored.
  std::size_t max_steps = 0;
  std::size_t eval_interval_steps = 1000;
  std::size_t dev_sample_size = 200;
  /// Stop after this many evaluations without a new best; 0 disables.
  std::size_t early_stop_evals = 0;
  Sampler sampler = Sampler::Drns;
  std::uint64_t seed = 0;

  /// Defaults for a phase: 8 epochs for intermediate training, 400 for
  /// fine-tuning.
  static TrainConfig defaults(Phase phase);
  /// Throws ConfigError on odd batch sizes or non-positive values.
  void validate() const;
};

/// Tokenized training material plus the fixed dev grid.
struct TrainSet {
  TrainingPool pool;
  std::vector<std::vector<int>> nl_tokens;  ///< by pool NL index
  std::vector<std::vector<int>> pl_tokens;  ///< by pool PL index
  std::vector<std::string> dev_source_ids, dev_target_ids;
  std::vector<std::vector<int>> dev_source_tokens, dev_target_tokens;
  std::set<Link> dev_gold;  ///< gold links inside the dev grid
};

/// Pools from the split's training links. The dev grid covers the
/// artifacts of up to dev_sample_size dev links, drawn once from the seed.
TrainSet make_train_set(const Project& project, const SplitSpec& split, const Vocab& vocab,
                        std::size_t dev_sample_size, std::uint64_t seed);

struct EvalPoint {
  std::size_t step = 0;
  double map3 = 0.0;
  double f2 = 0.0;
};

struct TrainHistory {
  Phase phase = Phase::Finetune;
  std::vector<double> loss;  ///< index i holds step i + 1
  std::vector<double> lr;
  std::vector<EvalPoint> evals;
  std::size_t best_step = 0;  ///< 0 when no evaluation completed
  std::size_t total_steps = 0;
  std::size_t ons_fallbacks = 0;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence;

  /// Columns step, loss, lr, dev_map3, dev_f2; dev columns are empty
  /// between evaluations.
  std::string to_csv() const;
};

struct TrainResult {
  RelModel<float> best;  ///< checkpoint with the highest dev MAP@3
  RelModel<float> last;  ///< state after the final successful step
  TrainHistory history;
};

/// Dev MAP@3 and best F2 of `model` on the train set's dev grid.
EvalPoint evaluate_dev(const RelModel<float>& model, const TrainSet& data);

using EvalCallback = std::function<void(const EvalPoint&)>;

/// Mini-batch training with two-class cross-entropy and Adam. Gradients of
/// accumulation_steps micro-batches are averaged over the effective batch
/// before each step. Dev evaluation runs every eval_interval_steps and at
/// the final step. Divergence stops the run and is reported in the
/// history rather than thrown.
TrainResult train_phase(RelModel<float> model, const TrainSet& data, const TrainConfig& config,
                        Phase phase, const EvalCallback& on_eval = {});

}  // namespace tracer
