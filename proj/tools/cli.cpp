#include "cli.hpp"

#include <functional>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "commands.hpp"
#include "tracer/error.hpp"
#include "tracer/trainer.hpp"

namespace tracer::cli {

namespace {

const std::vector<std::string> kArchitectures{"single", "twin", "siamese"};
const std::vector<std::string> kSamplers{"drns", "ons"};

struct Subcommand {
  CLI::App* app = nullptr;
  std::function<void(RunManifest)> run;
};

/// Resolved options of a subcommand in config syntax, leaving out unset
/// optional values.
std::string resolved_config(const CLI::App& sub) {
  std::istringstream in(sub.config_to_str(true, false));
  std::string out = "schema-version=" + std::to_string(kConfigSchemaVersion) + "\n[" + sub.get_name() + "]\n";
  for (std::string line; std::getline(in, line);) {
    if (!line.ends_with("=\"\"")) out += line + "\n";
  }
  return out;
}

/// Empty strings in a replayed config mean "not given".
void clear_if_empty(std::optional<std::filesystem::path>& p) {
  if (p && p->empty()) p.reset();
}

void add_model_options(CLI::App* app, ModelOptions& m) {
  const char* group = "Model (fresh initialization)";
  app->add_option("--layers", m.layers, "Transformer layers")->group(group);
  app->add_option("--heads", m.heads, "Attention heads")->group(group);
  app->add_option("--dim", m.dim, "Hidden width")->group(group);
  app->add_option("--ff-dim", m.ff_dim, "Feed-forward width")->group(group);
  app->add_option("--max-positions", m.max_positions, "Position table size")->group(group);
  app->add_option("--dropout", m.dropout, "Dropout rate")->group(group);
  app->add_option("--init-range", m.init_range, "Standard deviation of weight initialization")->group(group);
  app->add_option("--seq-len", m.seq_len, "Token budget per encoder input")->group(group);
  app->add_option("--vocab-size", m.vocab_size, "Target vocabulary size")->group(group);
}

void add_train_options(CLI::App* app, TrainOptions& o, Phase phase) {
  const auto d = TrainConfig::defaults(phase);
  o.batch_size = d.batch_size;
  o.accumulation_steps = d.accumulation_steps;
  o.lr0 = d.lr0;
  o.epochs = d.epochs;
  o.max_steps = d.max_steps;
  o.eval_interval = d.eval_interval_steps;
  o.dev_sample_size = d.dev_sample_size;
  app->add_option("--data", o.data, "Corpus directory")->required();
  app->add_option("--out", o.out, "Run directory")->required();
  app->add_option("--arch", o.arch, "Relation model architecture")
      ->transform(CLI::IsMember(kArchitectures, CLI::ignore_case));
  app->add_option("--sampler", o.sampler, "Negative sampling strategy")
      ->transform(CLI::IsMember(kSamplers, CLI::ignore_case));
  app->add_option("--init-from", o.init_from, "Pretraining run providing encoder and vocabulary");
  app->add_option("--batch-size", o.batch_size, "Examples per micro-batch (even)");
  app->add_option("--accumulation-steps", o.accumulation_steps, "Micro-batches per optimizer step");
  app->add_option("--lr", o.lr0, "Initial learning rate");
  app->add_option("--epochs", o.epochs, "Training epochs");
  app->add_option("--max-steps", o.max_steps, "Optimizer steps; overrides epochs when non-zero");
  app->add_option("--eval-interval", o.eval_interval, "Optimizer steps between dev evaluations");
  app->add_option("--dev-sample-size", o.dev_sample_size, "Dev links in the evaluation grid");
  app->add_option("--early-stop-evals", o.early_stop_evals, "Evaluations without improvement before stopping");
  app->add_option("--seed", o.seed, "Training seed");
  app->add_option("--folds", o.folds, "Folds when the corpus has no split");
  app->add_option("--split-seed", o.split_seed, "Split seed when the corpus has no split");
  add_model_options(app, o.model);
}

void configure_logging(const std::string& level) {
  auto logger = spdlog::get("trace");
  if (!logger) {
    logger = spdlog::stderr_color_mt("trace");
    logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  }
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Trace-link recovery between issues and commits with transformer relation models"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::string log_level = "info";
  int schema_version = kConfigSchemaVersion;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->configurable(false);
  app.set_config("--config", "",
                 "TOML-like file: schema-version = 1, then a [command] section of option = value lines");
  app.add_option("--schema-version", schema_version, "Config schema version");

  PlantOptions plant;
  MineOptions mine;
  PretrainOptions pretrain;
  TrainOptions intermediate, finetune;
  EvaluateOptions evaluate;
  ReportOptions report;
  std::vector<Subcommand> subs;

  {
    Subcommand s{app.add_subcommand("plant", "Generate a synthetic corpus with planted links"), {}};
    auto* a = s.app;
    a->add_option("--out", plant.out, "Corpus directory")->required();
    a->add_option("--pairs", plant.pairs, "Linked pairs");
    a->add_option("--noise", plant.noise, "Probability a key is spelled by its synonym");
    a->add_option("--kind", plant.kind, "trace or codesearch")->check(CLI::IsMember({"trace", "codesearch"}));
    a->add_option("--seed", plant.seed, "Corpus seed");
    a->add_option("--concepts", plant.concepts, "Concept table size");
    a->add_option("--keys-per-pair", plant.keys_per_pair, "Concepts shared by a pair");
    a->add_option("--nl-filler", plant.nl_filler, "Filler words per NL artifact");
    a->add_option("--pl-filler", plant.pl_filler, "Filler lines per PL artifact");
    a->add_option("--vocab-seed", plant.vocab_seed, "Seed of the concept table and lexicon");
    a->add_option("--folds", plant.folds, "Folds of the written split");
    a->add_option("--split-seed", plant.split_seed, "Split seed");
    a->add_option("--fixture-out", plant.fixture_out, "Also write recorded API responses here");
    a->add_option("--repo", plant.repo, "Repository name used in the fixture");
    s.run = [&](RunManifest m) { cmd_plant(plant, std::move(m)); };
    subs.push_back(s);
  }
  {
    Subcommand s{app.add_subcommand("mine", "Fetch issues and commits and mine trace links"), {}};
    auto* a = s.app;
    a->add_option("--repo", mine.source.repo, "owner/name")->required();
    a->add_option("--out", mine.out, "Corpus directory")->required();
    a->add_option("--offline", mine.source.fixture_dir, "Replay recorded responses from this directory");
    a->add_option("--token-env", mine.source.token_env, "Environment variable holding the API token");
    a->add_option("--api-url", mine.source.api_url, "API base URL");
    a->add_option("--rate-budget", mine.source.request_budget, "Requests allowed in this invocation");
    a->add_option("--page-size", mine.source.page_size, "Items per page");
    a->add_option("--max-retries", mine.source.max_retries, "Retries of a failed request");
    a->add_option("--backoff-ms", mine.source.backoff_ms, "First retry delay, doubled per attempt");
    a->add_option("--max-issues", mine.max_issues, "Newest issues kept");
    a->add_option("--min-loc", mine.min_loc, "Commits with fewer changed lines are dropped");
    a->add_option("--folds", mine.folds, "Folds of the written split");
    a->add_option("--split-seed", mine.split_seed, "Split seed");
    a->add_option("--record", mine.record, "Store every API response here in fixture format");
    s.run = [&](RunManifest m) {
      mine.source.mode = mine.source.fixture_dir ? IngestMode::Offline : IngestMode::Api;
      cmd_mine(mine, std::move(m));
    };
    subs.push_back(s);
  }
  {
    Subcommand s{app.add_subcommand("pretrain", "Masked-language-model pretraining of the encoder"), {}};
    auto* a = s.app;
    a->add_option("--data", pretrain.data, "Corpus directories")->required();
    a->add_option("--out", pretrain.out, "Run directory")->required();
    a->add_option("--steps", pretrain.steps, "Optimizer steps");
    a->add_option("--batch-size", pretrain.batch_size, "Sequences per step");
    a->add_option("--lr", pretrain.lr, "Initial learning rate");
    a->add_option("--mask-rate", pretrain.mask_rate, "Fraction of tokens selected for prediction");
    a->add_option("--seed", pretrain.seed, "Seed");
    add_model_options(a, pretrain.model);
    s.run = [&](RunManifest m) { cmd_pretrain(pretrain, std::move(m)); };
    subs.push_back(s);
  }
  {
    Subcommand s{app.add_subcommand("intermediate", "Relation training on a code-search corpus"), {}};
    add_train_options(s.app, intermediate, Phase::Intermediate);
    s.run = [&](RunManifest m) { cmd_intermediate(intermediate, std::move(m)); };
    subs.push_back(s);
  }
  {
    Subcommand s{app.add_subcommand("finetune", "Relation training on a trace corpus"), {}};
    add_train_options(s.app, finetune, Phase::Finetune);
    s.app->add_flag("--transfer", finetune.transfer, "Start from the intermediate run given by --from");
    s.app->add_option("--from", finetune.from, "Intermediate run directory");
    s.run = [&](RunManifest m) { cmd_finetune(finetune, std::move(m)); };
    subs.push_back(s);
  }
  {
    Subcommand s{app.add_subcommand("evaluate", "Score the test fold and write JSON, CSV and a table"), {}};
    auto* a = s.app;
    a->add_option("--model", evaluate.model, "Run directory or model bundle");
    a->add_option("--baseline", evaluate.baseline, "vsm, lsi, lda or random")
        ->check(CLI::IsMember({"vsm", "lsi", "lda", "random"}));
    a->add_option("--data", evaluate.data, "Corpus directory")->required();
    a->add_option("--out", evaluate.out, "Report directory")->required();
    a->add_option("--protocol", evaluate.protocol, "trace or codesearch")
        ->check(CLI::IsMember({"trace", "codesearch"}));
    a->add_option("--pool-size", evaluate.pool_size, "Code-search pool: 1 relevant plus distractors");
    a->add_option("--query-limit", evaluate.query_limit, "Evaluate a seeded sample of N queries");
    a->add_option("--seed", evaluate.seed, "Seed of pool sampling and random scores");
    a->add_option("--arch", evaluate.expect_arch, "Refuse unless the bundle has this architecture")
        ->transform(CLI::IsMember(kArchitectures, CLI::ignore_case));
    a->add_option("--vocab", evaluate.expect_vocab, "Refuse unless the bundle vocabulary matches this file");
    a->add_option("--lsi-rank", evaluate.lsi_rank, "LSI rank");
    a->add_option("--lda-topics", evaluate.lda_topics, "LDA topics");
    a->add_option("--folds", evaluate.folds, "Folds when the corpus has no split");
    a->add_option("--split-seed", evaluate.split_seed, "Split seed when the corpus has no split");
    s.run = [&](RunManifest m) { cmd_evaluate(evaluate, std::move(m)); };
    subs.push_back(s);
  }
  {
    Subcommand s{app.add_subcommand("report", "Merge learning curves into CSV, SVG and a summary table"), {}};
    s.app->add_option("runs", report.runs, "Run directories with history.csv")->required();
    s.app->add_option("--out", report.out, "Output directory")->required();
    s.run = [&](RunManifest m) { cmd_report(report, std::move(m)); };
    subs.push_back(s);
  }

  std::vector<std::string> argv_store{"trace"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    configure_logging(log_level);
    if (app.get_config_ptr()->count() > 0 && app.get_option("--schema-version")->count() == 0) {
      throw ConfigError("config file lacks schema-version");
    }
    if (schema_version != kConfigSchemaVersion) {
      throw ConfigError("unsupported config schema-version " + std::to_string(schema_version) + " (expected " +
                        std::to_string(kConfigSchemaVersion) + ")");
    }
    for (auto* p : {&mine.source.fixture_dir, &mine.record, &plant.fixture_out, &intermediate.init_from,
                    &intermediate.from, &finetune.init_from, &finetune.from, &evaluate.model,
                    &evaluate.expect_vocab}) {
      clear_if_empty(*p);
    }
    for (auto* p : {&evaluate.baseline, &evaluate.expect_arch}) {
      if (*p && (*p)->empty()) p->reset();
    }
    for (auto& s : subs) {
      if (!s.app->parsed()) continue;
      RunManifest manifest;
      manifest.command = s.app->get_name();
      manifest.argv = argv_store;
      manifest.config = resolved_config(*s.app);
      manifest.started_at = utc_now();
      s.run(std::move(manifest));
    }
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}

}  // namespace tracer::cli
