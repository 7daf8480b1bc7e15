#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ingest.hpp"
#include "manifest.hpp"

namespace tracer::cli {

struct PlantOptions {
  std::filesystem::path out;
  std::size_t pairs = 500;
  double noise = 0.6;
  std::string kind = "trace";
  std::uint64_t seed = 0;
  std::size_t concepts = 120;
  std::size_t keys_per_pair = 3;
  std::size_t nl_filler = 4;
  std::size_t pl_filler = 4;
  std::uint64_t vocab_seed = 7;
  int folds = 10;
  std::uint64_t split_seed = 0;
  /// Also render the corpus as recorded API responses for offline mining.
  std::optional<std::filesystem::path> fixture_out;
  std::string repo = "planted/demo";
};

struct MineOptions {
  IngestionSource source;
  std::filesystem::path out;
  std::size_t max_issues = 5000;
  std::int64_t min_loc = 5;
  int folds = 10;
  std::uint64_t split_seed = 0;
  std::optional<std::filesystem::path> record;
};

/// Encoder shape for runs that start without an upstream checkpoint.
struct ModelOptions {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t dim = 32;
  std::size_t ff_dim = 64;
  std::size_t max_positions = 128;
  double dropout = 0.1;
  double init_range = 0.02;
  std::size_t seq_len = 64;
  std::size_t vocab_size = 1000;
};

struct PretrainOptions {
  std::vector<std::filesystem::path> data;
  std::filesystem::path out;
  ModelOptions model;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double mask_rate = 0.15;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  std::string arch = "siamese";
  std::string sampler = "drns";
  ModelOptions model;
  /// Pretraining run whose encoder and vocabulary seed the model.
  std::optional<std::filesystem::path> init_from;
  /// Intermediate run to transfer from (fine-tuning only).
  std::optional<std::filesystem::path> from;
  bool transfer = false;
  std::size_t batch_size = 8;
  std::size_t accumulation_steps = 8;
  double lr0 = 1e-5;
  std::size_t epochs = 400;
  std::size_t max_steps = 0;
  std::size_t eval_interval = 1000;
  std::size_t dev_sample_size = 200;
  std::size_t early_stop_evals = 0;
  std::uint64_t seed = 0;
  int folds = 10;
  std::uint64_t split_seed = 0;
};

struct EvaluateOptions {
  std::optional<std::filesystem::path> model;
  std::optional<std::string> baseline;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string protocol = "trace";
  std::size_t pool_size = 1000;
  std::optional<std::size_t> query_limit;
  std::uint64_t seed = 0;
  std::optional<std::string> expect_arch;
  std::optional<std::filesystem::path> expect_vocab;
  std::size_t lsi_rank = 64;
  std::size_t lda_topics = 50;
  int folds = 10;
  std::uint64_t split_seed = 0;
};

struct ReportOptions {
  std::vector<std::filesystem::path> runs;
  std::filesystem::path out;
};

/// Each command writes its outputs plus manifest.json into the output
/// directory; `manifest` arrives with command, argv, config and start time.
void cmd_plant(const PlantOptions& options, RunManifest manifest);
void cmd_mine(const MineOptions& options, RunManifest manifest);
void cmd_pretrain(const PretrainOptions& options, RunManifest manifest);
void cmd_intermediate(const TrainOptions& options, RunManifest manifest);
void cmd_finetune(const TrainOptions& options, RunManifest manifest);
void cmd_evaluate(const EvaluateOptions& options, RunManifest manifest);
void cmd_report(const ReportOptions& options, RunManifest manifest);

/// Directory holding the model bundle of a run directory or bundle path.
std::filesystem::path resolve_bundle(const std::filesystem::path& path);

}  // namespace tracer::cli
