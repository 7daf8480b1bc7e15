#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tracer {

enum class ArtifactKind { NL, PL };

std::string_view to_string(ArtifactKind kind);

struct Segment {
  std::string label;
  std::string text;
  bool operator==(const Segment&) const = default;
};

/// One natural-language (issue, doc-string) or programming-language
/// (commit, function) document.
struct Artifact {
  std::string id;
  ArtifactKind kind = ArtifactKind::NL;
  std::vector<Segment> segments;
  std::int64_t loc = 0;  ///< changed lines; only meaningful for commits

  /// Segment texts joined in order, e.g. summary + description.
  std::string text() const;
  bool operator==(const Artifact&) const = default;
};

/// (source NL id, target PL id)
struct Link {
  std::string source;
  std::string target;
  auto operator<=>(const Link&) const = default;
};

enum class Provenance { TagMined, DatasetGiven };

struct LinkSet {
  std::set<Link> links;
  Provenance provenance = Provenance::TagMined;

  std::size_t size() const { return links.size(); }
  bool contains(const Link& l) const { return links.contains(l); }
  bool operator==(const LinkSet&) const = default;
};

/// Assignment of every gold link to one of n folds plus the
/// train/dev/test roles of the folds.
struct SplitSpec {
  std::map<Link, int> fold_of;
  int n_folds = 10;
  std::vector<int> train_folds;
  int dev_fold = 8;
  int test_fold = 9;
  std::uint64_t seed = 0;

  std::vector<Link> links_in(int fold) const;
  std::vector<Link> train_links() const;
  std::vector<Link> dev_links() const { return links_in(dev_fold); }
  std::vector<Link> test_links() const { return links_in(test_fold); }
  bool operator==(const SplitSpec&) const = default;
};

struct Project {
  std::string name;
  std::vector<Artifact> nl;
  std::vector<Artifact> pl;
  LinkSet gold;

  const Artifact* find_nl(std::string_view id) const;
  const Artifact* find_pl(std::string_view id) const;
  bool operator==(const Project&) const = default;
};

/// Defaults: `#(\d+)`, fix/close/resolve keywords followed by `#N`, and `GH-N`.
std::vector<std::string> default_link_patterns();

/// Extracts issue references from commit messages. Every captured number
/// that names an existing issue becomes a (issue, commit) link.
LinkSet mine_links(std::span<const Artifact> commits, std::span<const Artifact> issues,
                   std::span<const std::string> patterns);

/// Added plus removed lines of a unified diff, ignoring `+++`/`---` headers.
std::int64_t count_diff_loc(std::string_view diff);

/// Removes markdown fenced code blocks (```...```). An unclosed fence is
/// removed through the end of the text.
std::string strip_code_blocks(std::string_view text);

struct CleanOptions {
  std::int64_t min_loc = 5;
  std::size_t max_issues = 5000;
};

/// Strips code blocks from issue text, caps the issue count (newest kept),
/// drops small commits, then prunes links and artifacts until every
/// artifact participates in a link. Throws EmptyProjectError when nothing
/// survives.
Project clean_project(Project raw, const CleanOptions& options = {});

/// Deterministic partition of the gold links into n_folds folds of sizes
/// differing by at most one. The last two folds are dev and test.
SplitSpec split_folds(const LinkSet& gold, int n_folds, std::uint64_t seed);

/// Checks id uniqueness, non-empty segments, loc >= 0 and that every link
/// resolves. Throws ValidationError.
void validate_project(const Project& project);

/// Reads <dir>/nl.jsonl, pl.jsonl and links.jsonl. The project name is the
/// directory name.
Project load_project(const std::filesystem::path& dir);
void save_project(const Project& project, const std::filesystem::path& dir);

/// <dir>/splits.json, if present.
std::optional<SplitSpec> load_split(const std::filesystem::path& dir);
void save_split(const SplitSpec& split, const std::filesystem::path& dir);

}  // namespace tracer
