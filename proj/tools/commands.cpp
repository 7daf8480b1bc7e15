#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "curves.hpp"
#include "tracer/baselines.hpp"
#include "tracer/encoder.hpp"
#include "tracer/error.hpp"
#include "tracer/evalharness.hpp"
#include "tracer/hash.hpp"
#include "tracer/relhead.hpp"
#include "tracer/tokenizer.hpp"
#include "tracer/trainer.hpp"

namespace tracer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("short write to " + file.string());
}

/// Digest of the corpus files only, so re-running the producer does not
/// change it through its manifest timestamps.
std::string corpus_hash(const fs::path& dir) {
  std::string listing;
  for (const char* name : {"nl.jsonl", "pl.jsonl", "links.jsonl", "splits.json"}) {
    if (fs::exists(dir / name)) listing += std::string(name) + '\t' + hash_path(dir / name) + '\n';
  }
  if (listing.empty()) throw ValidationError("no corpus files in " + dir.string());
  return sha256_hex(listing);
}

struct Data {
  Project project;
  SplitSpec split;
  bool split_from_file = false;
};

Data load_data(const fs::path& dir, int folds, std::uint64_t split_seed) {
  if (!fs::is_directory(dir)) throw ValidationError("corpus directory " + dir.string() + " does not exist");
  Data d{load_project(dir), {}, false};
  if (auto split = load_split(dir)) {
    d.split = std::move(*split);
    d.split_from_file = true;
  } else {
    d.split = split_folds(d.project.gold, folds, split_seed);
  }
  return d;
}

std::vector<std::string> corpus_texts(const Project& p) {
  std::vector<std::string> texts;
  for (const auto& a : p.nl) texts.push_back(a.text());
  for (const auto& a : p.pl) texts.push_back(a.text());
  return texts;
}

EncoderConfig encoder_config(const ModelOptions& m, std::size_t vocab_size) {
  EncoderConfig c;
  c.layers = m.layers;
  c.heads = m.heads;
  c.dim = m.dim;
  c.ff_dim = m.ff_dim;
  c.max_positions = m.max_positions;
  c.dropout = m.dropout;
  c.init_range = m.init_range;
  c.vocab_size = vocab_size;
  c.validate();
  return c;
}

void finish(RunManifest& manifest, const fs::path& out) {
  manifest.finished_at = utc_now();
  write_manifest(manifest, out);
}

void save_split_if_possible(const Project& project, int folds, std::uint64_t seed, const fs::path& out,
                            RunManifest& manifest) {
  if (project.gold.size() < static_cast<std::size_t>(folds)) {
    spdlog::warn("{} links cannot fill {} folds; no split written", project.gold.size(), folds);
    manifest.details["split"] = nullptr;
    return;
  }
  save_split(split_folds(project.gold, folds, seed), out);
  manifest.details["split"] = {{"folds", folds}, {"seed", seed}};
}

void run_training(const TrainOptions& o, RunManifest manifest, Phase phase) {
  const auto arch = parse_architecture(o.arch);
  auto data = load_data(o.data, o.folds, o.split_seed);
  manifest.input_hashes["data"] = corpus_hash(o.data);
  manifest.seeds["train"] = o.seed;
  manifest.seeds["split"] = data.split_from_file ? data.split.seed : o.split_seed;

  TrainConfig config = TrainConfig::defaults(phase);
  config.batch_size = o.batch_size;
  config.accumulation_steps = o.accumulation_steps;
  config.lr0 = o.lr0;
  config.epochs = o.epochs;
  config.max_steps = o.max_steps;
  config.eval_interval_steps = o.eval_interval;
  config.dev_sample_size = o.dev_sample_size;
  config.early_stop_evals = o.early_stop_evals;
  config.sampler = parse_sampler(o.sampler);
  config.seed = o.seed;
  config.validate();

  if (o.transfer && phase != Phase::Finetune) throw ConfigError("--transfer applies to fine-tuning only");
  if (o.transfer && !o.from) throw ConfigError("--transfer needs --from <intermediate run>");
  if (o.from && !o.transfer) throw ConfigError("--from is only read together with --transfer");
  if (o.transfer && o.init_from) throw ConfigError("--transfer and --init-from are exclusive");

  std::optional<RelModel<float>> model;
  std::optional<Vocab> vocab;
  if (o.transfer) {
    const auto expected = *o.from / "model" / "manifest.json";
    if (!fs::exists(expected)) {
      throw ValidationError("missing intermediate checkpoint: expected " + expected.string());
    }
    auto bundle = load_model_bundle(expected.parent_path());
    model = transfer(bundle.model, arch);
    vocab = std::move(bundle.vocab);
    manifest.input_hashes["transfer"] = hash_path(expected.parent_path());
    manifest.details["init"] = {{"mode", "transfer"}, {"path", expected.parent_path().string()}};
  } else if (o.init_from) {
    const auto enc_file = *o.init_from / "encoder.ckpt", vocab_file = *o.init_from / "vocab.txt";
    for (const auto& f : {enc_file, vocab_file}) {
      if (!fs::exists(f)) throw ValidationError("missing pretrained checkpoint: expected " + f.string());
    }
    vocab = Vocab::load(vocab_file);
    model = RelModel<float>::from_encoder(arch, load_encoder(enc_file), o.model.seq_len, o.seed);
    manifest.input_hashes["pretrained_encoder"] = hash_path(enc_file);
    manifest.input_hashes["pretrained_vocab"] = hash_path(vocab_file);
    manifest.details["init"] = {{"mode", "pretrained"}, {"path", o.init_from->string()}};
  } else {
    vocab = Vocab::build(corpus_texts(data.project), o.model.vocab_size);
    model = RelModel<float>::init(arch, encoder_config(o.model, vocab->size()), o.model.seq_len, o.seed);
    manifest.details["init"] = {{"mode", "random"}};
  }

  const auto train = make_train_set(data.project, data.split, *vocab, config.dev_sample_size, o.seed);
  spdlog::info("{} {} on {}: {} training links, {} dev links, vocab {}", to_string(phase), to_string(arch),
               o.data.string(), train.pool.positives.size(), train.dev_gold.size(), vocab->size());
  const auto result = train_phase(std::move(*model), train, config, phase, [](const EvalPoint& p) {
    spdlog::info("step {:>6}  dev MAP@3 {:.4f}  F2 {:.4f}", p.step, p.map3, p.f2);
  });

  fs::create_directories(o.out);
  write_text(o.out / "history.csv", result.history.to_csv());
  const json bundle_extra{{"phase", to_string(phase)}, {"sampler", to_string(config.sampler)}};
  save_model_bundle(result.best, *vocab, o.out / "model", bundle_extra);
  save_model_bundle(result.last, *vocab, o.out / "last", bundle_extra);

  const auto& h = result.history;
  double best_map = 0.0;
  for (const auto& e : h.evals) {
    if (e.step == h.best_step) best_map = e.map3;
  }
  manifest.details["architecture"] = to_string(arch);
  manifest.details["sampler"] = to_string(config.sampler);
  manifest.details["phase"] = to_string(phase);
  manifest.details["vocab_hash"] = vocab->hash();
  manifest.details["total_steps"] = h.total_steps;
  manifest.details["best_step"] = h.best_step;
  manifest.details["best_dev_map3"] = best_map;
  manifest.details["early_stopped"] = h.early_stopped;
  manifest.details["ons_fallbacks"] = h.ons_fallbacks;
  manifest.details["diverged"] = h.diverged;
  if (h.diverged) manifest.details["divergence"] = h.divergence;
  finish(manifest, o.out);
  if (h.diverged) throw NumericalError("training diverged: " + h.divergence + " (outputs kept in " + o.out.string() + ")");
}

}  // namespace

fs::path resolve_bundle(const fs::path& path) {
  if (fs::exists(path / "model" / "manifest.json")) return path / "model";
  if (fs::exists(path / "manifest.json") && fs::exists(path / "vocab.txt")) return path;
  throw ValidationError("no model bundle at " + (path / "model" / "manifest.json").string());
}

void cmd_plant(const PlantOptions& o, RunManifest manifest) {
  PlantedProfile profile;
  if (o.kind == "trace") {
    profile.kind = PlantedKind::Trace;
  } else if (o.kind == "codesearch") {
    profile.kind = PlantedKind::CodeSearch;
  } else {
    throw ConfigError("planted kind must be trace or codesearch, got '" + o.kind + "'");
  }
  profile.concepts = o.concepts;
  profile.keys_per_pair = o.keys_per_pair;
  profile.nl_filler = o.nl_filler;
  profile.pl_filler = o.pl_filler;
  profile.vocab_seed = o.vocab_seed;
  const auto project = make_planted_corpus(o.pairs, profile, o.noise, o.seed);
  save_project(project, o.out);
  save_split(split_folds(project.gold, o.folds, o.split_seed), o.out);
  manifest.seeds["corpus"] = o.seed;
  manifest.seeds["vocab"] = o.vocab_seed;
  manifest.seeds["split"] = o.split_seed;
  manifest.details = {{"pairs", o.pairs}, {"noise", o.noise}, {"kind", o.kind}};
  if (o.fixture_out) {
    if (profile.kind != PlantedKind::Trace) throw ConfigError("API fixtures are rendered for trace corpora only");
    write_project_fixture(project, o.repo, *o.fixture_out);
    manifest.details["fixture"] = {{"dir", o.fixture_out->string()}, {"repo", o.repo}};
    RunManifest fixture_manifest = manifest;
    finish(fixture_manifest, *o.fixture_out);
  }
  finish(manifest, o.out);
  spdlog::info("planted {} pairs into {}", project.gold.size(), o.out.string());
}

void cmd_mine(const MineOptions& o, RunManifest manifest) {
  auto transport = make_transport(o.source);
  std::unique_ptr<RecordingTransport> recorder;
  Transport* active = transport.get();
  if (o.record) {
    recorder = std::make_unique<RecordingTransport>(*transport, *o.record);
    active = recorder.get();
  }
  FetchOptions fetch;
  fetch.max_issues = o.max_issues;
  fetch.cursor_file = o.out / "mine_cursor.json";
  const auto raw = fetch_repository(*active, o.source, fetch);

  Project project;
  project.name = o.source.repo.substr(o.source.repo.find('/') + 1);
  project.nl = raw.issues;
  project.pl = raw.commits;
  const auto patterns = default_link_patterns();
  project.gold = mine_links(project.pl, project.nl, patterns);
  const auto mined_links = project.gold.size();
  project = clean_project(std::move(project), CleanOptions{o.min_loc, o.max_issues});
  save_project(project, o.out);

  manifest.seeds["split"] = o.split_seed;
  if (o.source.mode == IngestMode::Offline) manifest.input_hashes["fixtures"] = hash_path(*o.source.fixture_dir);
  manifest.details = {{"repo", o.source.repo},
                      {"mode", o.source.mode == IngestMode::Api ? "api" : "offline"},
                      {"requests", raw.requests},
                      {"fetched_issues", raw.issues.size()},
                      {"fetched_commits", raw.commits.size()},
                      {"mined_links", mined_links},
                      {"issues", project.nl.size()},
                      {"commits", project.pl.size()},
                      {"links", project.gold.size()}};
  save_split_if_possible(project, o.folds, o.split_seed, o.out, manifest);
  finish(manifest, o.out);
  spdlog::info("mined {}: {} issues, {} commits, {} links", o.source.repo, project.nl.size(), project.pl.size(),
               project.gold.size());
}

void cmd_pretrain(const PretrainOptions& o, RunManifest manifest) {
  if (o.data.empty()) throw ConfigError("pretraining needs at least one corpus directory");
  std::vector<std::string> texts;
  for (const auto& dir : o.data) {
    if (!fs::is_directory(dir)) throw ValidationError("corpus directory " + dir.string() + " does not exist");
    for (auto& t : corpus_texts(load_project(dir))) texts.push_back(std::move(t));
    manifest.input_hashes["data:" + dir.string()] = corpus_hash(dir);
  }
  const auto vocab = Vocab::build(texts, o.model.vocab_size);
  std::vector<TokenSequence> sequences;
  sequences.reserve(texts.size());
  for (const auto& t : texts) sequences.push_back(encode(t, vocab, o.model.seq_len));

  PretrainConfig train;
  train.steps = o.steps;
  train.batch_size = o.batch_size;
  train.lr = o.lr;
  train.mask_rate = o.mask_rate;
  train.seed = o.seed;
  const auto log_every = std::max<std::size_t>(1, o.steps / 20);
  train.on_step = [&](std::size_t step, double loss) {
    if (step % log_every == 0) spdlog::info("step {:>6}  MLM loss {:.4f}", step, loss);
  };
  const auto result = pretrain_mlm(sequences, encoder_config(o.model, vocab.size()), train);

  fs::create_directories(o.out);
  save_encoder(result.params, o.out / "encoder.ckpt");
  vocab.save(o.out / "vocab.txt");
  std::string csv = "step,loss\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    csv += std::to_string(i + 1) + "," + fmt::format("{:.17g}", result.loss_history[i]) + "\n";
  }
  write_text(o.out / "history.csv", csv);
  manifest.seeds["pretrain"] = o.seed;
  manifest.details = {{"sequences", sequences.size()},
                      {"vocab_size", vocab.size()},
                      {"vocab_hash", vocab.hash()},
                      {"initial_loss", result.loss_history.empty() ? 0.0 : result.loss_history.front()},
                      {"final_loss", result.loss_history.empty() ? 0.0 : result.loss_history.back()}};
  finish(manifest, o.out);
}

void cmd_intermediate(const TrainOptions& options, RunManifest manifest) {
  run_training(options, std::move(manifest), Phase::Intermediate);
}

void cmd_finetune(const TrainOptions& options, RunManifest manifest) {
  run_training(options, std::move(manifest), Phase::Finetune);
}

void cmd_evaluate(const EvaluateOptions& o, RunManifest manifest) {
  if (o.model.has_value() == o.baseline.has_value()) {
    throw ConfigError("evaluate needs exactly one of --model or --baseline");
  }
  EvalProtocol protocol;
  if (o.protocol == "trace") {
    protocol.mode = EvalMode::Trace;
  } else if (o.protocol == "codesearch") {
    protocol.mode = EvalMode::CodeSearch;
  } else {
    throw ConfigError("protocol must be trace or codesearch, got '" + o.protocol + "'");
  }
  if (o.query_limit && protocol.mode != EvalMode::CodeSearch) {
    throw ConfigError("--query-limit applies to the codesearch protocol");
  }
  protocol.pool_size = o.pool_size;
  protocol.query_limit = o.query_limit;
  protocol.seed = o.seed;
  protocol.validate();

  const auto data = load_data(o.data, o.folds, o.split_seed);
  manifest.input_hashes["data"] = corpus_hash(o.data);
  manifest.seeds["protocol"] = o.seed;

  std::optional<ModelBundle> bundle;
  std::unique_ptr<PairModel> pm;
  if (o.model) {
    const auto dir = resolve_bundle(*o.model);
    bundle = load_model_bundle(dir);
    manifest.input_hashes["model"] = hash_path(dir);
    const auto arch = bundle->model.architecture;
    if (o.expect_arch && parse_architecture(*o.expect_arch) != arch) {
      throw ValidationError("architecture mismatch: bundle " + dir.string() + " holds " +
                            std::string(to_string(arch)) + ", expected " + *o.expect_arch);
    }
    if (o.expect_vocab) {
      const auto expected = Vocab::load(*o.expect_vocab).hash();
      if (expected != bundle->vocab.hash()) {
        throw ValidationError("vocabulary mismatch: bundle " + dir.string() + " has hash " + bundle->vocab.hash() +
                              ", " + o.expect_vocab->string() + " has " + expected);
      }
    }
    pm = std::make_unique<NeuralPairModel>(bundle->model, bundle->vocab);
  } else if (*o.baseline == "vsm") {
    pm = std::make_unique<VsmPairModel>();
  } else if (*o.baseline == "lsi") {
    pm = std::make_unique<LsiPairModel>(o.lsi_rank);
  } else if (*o.baseline == "lda") {
    pm = std::make_unique<LdaPairModel>(LdaConfig::defaults(o.lda_topics));
  } else if (*o.baseline == "random") {
    pm = std::make_unique<RandomPairModel>(o.seed);
  } else {
    throw ConfigError("baseline must be vsm, lsi, lda or random, got '" + *o.baseline + "'");
  }

  const auto report = protocol.mode == EvalMode::Trace ? trace_eval(*pm, data.project, data.split, protocol)
                                                        : code_search_eval(*pm, data.project, data.split, protocol);
  fs::create_directories(o.out);
  write_text(o.out / "report.json", report_to_json(report).dump(2) + "\n");
  write_text(o.out / "report.csv", report_to_csv(report));
  const std::vector<EvalReport> rows{report};
  write_text(o.out / "report.txt", report_to_table(rows));
  manifest.details = {{"model", report.model},
                      {"wall_seconds", report.wall_seconds},
                      {"encoder_calls", report.encoder_calls},
                      {"candidates", report.candidates}};
  finish(manifest, o.out);
  spdlog::info("{}", report_to_table(rows));
}

void cmd_report(const ReportOptions& o, RunManifest manifest) {
  const auto merged = merge_histories(o.runs);
  fs::create_directories(o.out);
  write_text(o.out / "curves.csv", merged.csv);
  write_text(o.out / "curves.svg", render_svg(merged.series, "step", "dev MAP@3", "Dev MAP@3 by optimization step"));

  std::string table = fmt::format("{:<24} {:>6} {:>10} {:>10} {:>10}\n", "run", "evals", "best step", "best MAP",
                                  "final MAP");
  for (const auto& s : merged.series) {
    auto best = s.points.front();
    for (const auto& p : s.points) {
      if (p.second > best.second) best = p;
    }
    table += fmt::format("{:<24} {:>6} {:>10} {:>10.4f} {:>10.4f}\n", s.name, s.points.size(), best.first,
                         best.second, s.points.back().second);
  }
  write_text(o.out / "summary.txt", table);
  for (const auto& run : o.runs) manifest.input_hashes[run.string()] = hash_path(run / "history.csv");
  manifest.details = {{"series", merged.series.size()}};
  finish(manifest, o.out);
  spdlog::info("\n{}", table);
}

}  // namespace tracer::cli
