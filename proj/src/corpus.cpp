#include "tracer/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "tracer/error.hpp"
#include "tracer/rng.hpp"

namespace tracer {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(ArtifactKind kind) { return kind == ArtifactKind::NL ? "NL" : "PL"; }

std::string Artifact::text() const {
  std::string out;
  for (const auto& s : segments) {
    if (s.text.empty()) continue;
    if (!out.empty()) out += '\n';
    out += s.text;
  }
  return out;
}

std::vector<Link> SplitSpec::links_in(int fold) const {
  std::vector<Link> out;
  for (const auto& [link, f] : fold_of) {
    if (f == fold) out.push_back(link);
  }
  return out;
}

std::vector<Link> SplitSpec::train_links() const {
  std::vector<Link> out;
  for (const auto& [link, f] : fold_of) {
    if (std::find(train_folds.begin(), train_folds.end(), f) != train_folds.end()) {
      out.push_back(link);
    }
  }
  return out;
}

namespace {

const Artifact* find_by_id(const std::vector<Artifact>& items, std::string_view id) {
  for (const auto& a : items) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view commit_message(const Artifact& commit) {
  for (const auto& s : commit.segments) {
    if (s.label == "commit_message") return s.text;
  }
  return commit.segments.empty() ? std::string_view{} : std::string_view(commit.segments[0].text);
}

// Issue ordering for the cap: numeric ids compare numerically.
bool newer_issue(const Artifact& a, const Artifact& b) {
  if (all_digits(a.id) && all_digits(b.id) && a.id.size() != b.id.size()) {
    return a.id.size() > b.id.size();
  }
  return a.id > b.id;
}

}  // namespace

const Artifact* Project::find_nl(std::string_view id) const { return find_by_id(nl, id); }
const Artifact* Project::find_pl(std::string_view id) const { return find_by_id(pl, id); }

std::vector<std::string> default_link_patterns() {
  return {R"(#(\d+))", R"((?i)(fix(es|ed)?|close[sd]?|resolve[sd]?)\s+#(\d+))", R"(GH-(\d+))"};
}

LinkSet mine_links(std::span<const Artifact> commits, std::span<const Artifact> issues,
                   std::span<const std::string> patterns) {
  if (patterns.empty()) throw ConfigError("mine_links: empty pattern list");
  std::vector<std::regex> compiled;
  for (const auto& p : patterns) {
    std::string body = p;
    auto flags = std::regex::ECMAScript;
    if (body.starts_with("(?i)")) {
      body = body.substr(4);
      flags |= std::regex::icase;
    }
    try {
      compiled.emplace_back(body, flags);
    } catch (const std::regex_error& e) {
      throw ConfigError("mine_links: bad pattern '" + p + "': " + e.what());
    }
  }
  std::unordered_set<std::string> issue_ids;
  for (const auto& i : issues) issue_ids.insert(i.id);

  LinkSet out;
  out.provenance = Provenance::TagMined;
  for (const auto& c : commits) {
    const std::string msg(commit_message(c));
    for (const auto& re : compiled) {
      for (auto it = std::sregex_iterator(msg.begin(), msg.end(), re); it != std::sregex_iterator();
           ++it) {
        const auto& m = *it;
        // The issue number is the last captured group made of digits.
        for (std::size_t g = m.size(); g-- > 1;) {
          if (!m[g].matched) continue;
          const std::string number = m[g].str();
          if (!all_digits(number)) continue;
          if (issue_ids.contains(number)) out.links.insert({number, c.id});
          break;
        }
      }
    }
  }
  return out;
}

std::int64_t count_diff_loc(std::string_view diff) {
  std::int64_t loc = 0;
  std::size_t pos = 0;
  while (pos <= diff.size()) {
    std::size_t end = diff.find('\n', pos);
    if (end == std::string_view::npos) end = diff.size();
    std::string_view line = diff.substr(pos, end - pos);
    if (!line.empty() && (line[0] == '+' || line[0] == '-') && !line.starts_with("+++") &&
        !line.starts_with("---")) {
      ++loc;
    }
    pos = end + 1;
  }
  return loc;
}

std::string strip_code_blocks(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::size_t close = text.find("```", open + 3);
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return out;
}

Project clean_project(Project raw, const CleanOptions& options) {
  for (auto& issue : raw.nl) {
    for (auto& seg : issue.segments) seg.text = strip_code_blocks(seg.text);
  }

  if (raw.nl.size() > options.max_issues) {
    std::stable_sort(raw.nl.begin(), raw.nl.end(), newer_issue);
    raw.nl.resize(options.max_issues);
  }
  std::erase_if(raw.pl, [&](const Artifact& a) { return a.loc < options.min_loc; });

  std::unordered_set<std::string> nl_ids, pl_ids;
  for (const auto& a : raw.nl) nl_ids.insert(a.id);
  for (const auto& a : raw.pl) pl_ids.insert(a.id);
  std::erase_if(raw.gold.links, [&](const Link& l) {
    return !nl_ids.contains(l.source) || !pl_ids.contains(l.target);
  });
  if (raw.gold.links.empty()) {
    throw EmptyProjectError("project '" + raw.name + "' has no links after cleaning");
  }

  std::unordered_set<std::string> linked_nl, linked_pl;
  for (const auto& l : raw.gold.links) {
    linked_nl.insert(l.source);
    linked_pl.insert(l.target);
  }
  std::erase_if(raw.nl, [&](const Artifact& a) { return !linked_nl.contains(a.id); });
  std::erase_if(raw.pl, [&](const Artifact& a) { return !linked_pl.contains(a.id); });
  return raw;
}

SplitSpec split_folds(const LinkSet& gold, int n_folds, std::uint64_t seed) {
  if (n_folds < 3) throw ConfigError("split_folds: need at least 3 folds for train/dev/test");
  if (gold.size() < static_cast<std::size_t>(n_folds)) {
    throw ConfigError("split_folds: " + std::to_string(gold.size()) + " links cannot fill " +
                      std::to_string(n_folds) + " folds");
  }
  std::vector<Link> order(gold.links.begin(), gold.links.end());
  Rng rng(seed);
  rng.shuffle(std::span<Link>(order));

  SplitSpec split;
  split.n_folds = n_folds;
  split.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    split.fold_of[order[i]] = static_cast<int>(i % n_folds);
  }
  for (int f = 0; f < n_folds - 2; ++f) split.train_folds.push_back(f);
  split.dev_fold = n_folds - 2;
  split.test_fold = n_folds - 1;
  return split;
}

void validate_project(const Project& project) {
  auto check_side = [](const std::vector<Artifact>& items, ArtifactKind kind) {
    std::unordered_set<std::string> seen;
    for (const auto& a : items) {
      if (a.kind != kind) {
        throw ValidationError("artifact '" + a.id + "' has kind " + std::string(to_string(a.kind)));
      }
      if (!seen.insert(a.id).second) throw ValidationError("duplicate artifact id '" + a.id + "'");
      if (a.segments.empty()) throw ValidationError("artifact '" + a.id + "' has no segments");
      if (a.loc < 0) throw ValidationError("artifact '" + a.id + "' has negative loc");
    }
    return seen;
  };
  const auto nl_ids = check_side(project.nl, ArtifactKind::NL);
  const auto pl_ids = check_side(project.pl, ArtifactKind::PL);
  for (const auto& l : project.gold.links) {
    if (!nl_ids.contains(l.source)) throw ValidationError("link source '" + l.source + "' unknown");
    if (!pl_ids.contains(l.target)) throw ValidationError("link target '" + l.target + "' unknown");
  }
}

namespace {

json artifact_to_json(const Artifact& a) {
  json segs = json::array();
  for (const auto& s : a.segments) segs.push_back({{"label", s.label}, {"text", s.text}});
  json j = {{"id", a.id}, {"kind", std::string(to_string(a.kind))}, {"segments", segs}};
  if (a.kind == ArtifactKind::PL) j["loc"] = a.loc;
  return j;
}

// Calls fn(line_number, parsed_json) for every non-blank line.
template <typename Fn>
void for_each_record(const fs::path& file, Fn&& fn) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(file.string(), number, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(file.string(), number, "record is not an object");
    fn(number, j);
  }
}

std::string require_string(const json& j, const char* key, const fs::path& file, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(file.string(), line, std::string("missing \"") + key + "\"");
  if (!it->is_string()) {
    throw ParseError(file.string(), line, std::string("\"") + key + "\" is not a string");
  }
  return it->get<std::string>();
}

std::vector<Artifact> load_artifacts(const fs::path& file, ArtifactKind expected) {
  std::vector<Artifact> out;
  std::unordered_set<std::string> seen;
  for_each_record(file, [&](std::size_t line, const json& j) {
    Artifact a;
    a.id = require_string(j, "id", file, line);
    const std::string kind = require_string(j, "kind", file, line);
    if (kind == "NL") {
      a.kind = ArtifactKind::NL;
    } else if (kind == "PL") {
      a.kind = ArtifactKind::PL;
    } else {
      throw ParseError(file.string(), line, "unknown kind '" + kind + "'");
    }
    if (a.kind != expected) throw ParseError(file.string(), line, "kind " + kind + " in wrong file");
    auto segs = j.find("segments");
    if (segs == j.end() || !segs->is_array() || segs->empty()) {
      throw ParseError(file.string(), line, "\"segments\" must be a non-empty array");
    }
    for (const auto& s : *segs) {
      if (!s.is_object()) throw ParseError(file.string(), line, "segment is not an object");
      a.segments.push_back({require_string(s, "label", file, line), require_string(s, "text", file, line)});
    }
    if (auto loc = j.find("loc"); loc != j.end() && !loc->is_null()) {
      if (!loc->is_number_integer()) throw ParseError(file.string(), line, "\"loc\" is not an integer");
      a.loc = loc->get<std::int64_t>();
      if (a.loc < 0) throw ParseError(file.string(), line, "\"loc\" is negative");
    }
    if (!seen.insert(a.id).second) {
      throw ValidationError(file.string() + ":" + std::to_string(line) + ": duplicate id '" + a.id + "'");
    }
    out.push_back(std::move(a));
  });
  return out;
}

void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

Project load_project(const fs::path& dir) {
  Project p;
  p.name = fs::absolute(dir).lexically_normal().filename().string();
  if (p.name.empty()) p.name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  p.nl = load_artifacts(dir / "nl.jsonl", ArtifactKind::NL);
  p.pl = load_artifacts(dir / "pl.jsonl", ArtifactKind::PL);
  const fs::path links = dir / "links.jsonl";
  bool provenance_seen = false;
  for_each_record(links, [&](std::size_t line, const json& j) {
    Link l{require_string(j, "source", links, line), require_string(j, "target", links, line)};
    if (auto prov = j.find("provenance"); prov != j.end() && !provenance_seen) {
      p.gold.provenance = prov->get<std::string>() == "dataset_given" ? Provenance::DatasetGiven
                                                                        : Provenance::TagMined;
      provenance_seen = true;
    }
    if (!p.gold.links.insert(l).second) {
      throw ValidationError(links.string() + ":" + std::to_string(line) + ": duplicate link");
    }
  });
  validate_project(p);
  return p;
}

void save_project(const Project& project, const fs::path& dir) {
  validate_project(project);
  fs::create_directories(dir);
  std::vector<std::string> lines;
  for (const auto& a : project.nl) lines.push_back(artifact_to_json(a).dump());
  write_lines(dir / "nl.jsonl", lines);
  lines.clear();
  for (const auto& a : project.pl) lines.push_back(artifact_to_json(a).dump());
  write_lines(dir / "pl.jsonl", lines);
  lines.clear();
  const char* prov = project.gold.provenance == Provenance::DatasetGiven ? "dataset_given" : "tag_mined";
  for (const auto& l : project.gold.links) {
    lines.push_back(json{{"source", l.source}, {"target", l.target}, {"provenance", prov}}.dump());
  }
  write_lines(dir / "links.jsonl", lines);
}

std::optional<SplitSpec> load_split(const fs::path& dir) {
  const fs::path file = dir / "splits.json";
  if (!fs::exists(file)) return std::nullopt;
  std::ifstream in(file);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(file.string(), 1, e.what());
  }
  SplitSpec s;
  try {
    s.n_folds = j.at("n_folds").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_folds = j.at("train_folds").get<std::vector<int>>();
    s.dev_fold = j.at("dev_fold").get<int>();
    s.test_fold = j.at("test_fold").get<int>();
    for (const auto& a : j.at("assignment")) {
      s.fold_of[{a.at("source").get<std::string>(), a.at("target").get<std::string>()}] =
          a.at("fold").get<int>();
    }
  } catch (const json::exception& e) {
    throw ParseError(file.string(), 1, e.what());
  }
  return s;
}

void save_split(const SplitSpec& split, const fs::path& dir) {
  json assignment = json::array();
  for (const auto& [link, fold] : split.fold_of) {
    assignment.push_back({{"source", link.source}, {"target", link.target}, {"fold", fold}});
  }
  json j = {{"n_folds", split.n_folds},         {"seed", split.seed},
            {"train_folds", split.train_folds}, {"dev_fold", split.dev_fold},
            {"test_fold", split.test_fold},     {"assignment", assignment}};
  fs::create_directories(dir);
  std::ofstream out(dir / "splits.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "splits.json").string());
  out << j.dump(1) << '\n';
}

}  // namespace tracer
