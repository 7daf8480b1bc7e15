#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "ingest.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "tracer/hash.hpp"

namespace tracer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<std::uint64_t> g_network_ops{0};

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& data) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << data;
  if (!out) throw IoError("short write to " + file.string());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string issues_path(const std::string& repo, std::size_t page, std::size_t per_page) {
  return "/repos/" + repo + "/issues?state=all&sort=created&direction=desc&per_page=" +
         std::to_string(per_page) + "&page=" + std::to_string(page);
}

std::string commits_path(const std::string& repo, std::size_t page, std::size_t per_page) {
  return "/repos/" + repo + "/commits?per_page=" + std::to_string(per_page) + "&page=" + std::to_string(page);
}

std::string commit_path(const std::string& repo, const std::string& sha) {
  return "/repos/" + repo + "/commits/" + sha;
}

/// Resumable progress of one fetch.
struct FetchState {
  std::string repo;
  std::vector<Artifact> issues;
  std::size_t issue_page = 1;
  bool issues_done = false;
  std::vector<std::string> shas;
  std::size_t commit_page = 1;
  bool commits_done = false;
  std::vector<Artifact> commits;  ///< details of shas[0, commits.size())

  json to_json() const {
    json j;
    j["repo"] = repo;
    j["issue_page"] = issue_page;
    j["issues_done"] = issues_done;
    j["commit_page"] = commit_page;
    j["commits_done"] = commits_done;
    j["shas"] = shas;
    j["issues"] = json::array();
    for (const auto& a : issues) {
      j["issues"].push_back({{"id", a.id}, {"title", a.segments.at(0).text}, {"body", a.segments.at(1).text}});
    }
    j["commits"] = json::array();
    for (const auto& a : commits) {
      j["commits"].push_back({{"id", a.id}, {"message", a.segments.at(0).text}, {"diff", a.segments.at(1).text}});
    }
    return j;
  }
};

Artifact make_issue(std::string id, std::string title, std::string body) {
  Artifact a;
  a.id = std::move(id);
  a.kind = ArtifactKind::NL;
  a.segments = {{"summary", std::move(title)}, {"description", std::move(body)}};
  return a;
}

Artifact make_commit(std::string sha, std::string message, std::string diff) {
  Artifact a;
  a.id = std::move(sha);
  a.kind = ArtifactKind::PL;
  a.loc = count_diff_loc(diff);
  a.segments = {{"commit_message", std::move(message)}, {"diff", std::move(diff)}};
  return a;
}

FetchState state_from_json(const json& j) {
  FetchState s;
  s.repo = j.at("repo").get<std::string>();
  s.issue_page = j.at("issue_page").get<std::size_t>();
  s.issues_done = j.at("issues_done").get<bool>();
  s.commit_page = j.at("commit_page").get<std::size_t>();
  s.commits_done = j.at("commits_done").get<bool>();
  s.shas = j.at("shas").get<std::vector<std::string>>();
  for (const auto& i : j.at("issues")) {
    s.issues.push_back(make_issue(i.at("id"), i.at("title"), i.at("body")));
  }
  for (const auto& c : j.at("commits")) {
    s.commits.push_back(make_commit(c.at("id"), c.at("message"), c.at("diff")));
  }
  return s;
}

json parse_payload(const std::string& body, const std::string& path) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw PayloadError("malformed JSON from " + path + ": " + e.what());
  }
}

std::string text_field(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw PayloadError(path + ": missing field '" + key + "'");
  const auto& v = obj.at(key);
  if (v.is_null()) return {};
  if (!v.is_string()) throw PayloadError(path + ": field '" + key + "' is not a string");
  return v.get<std::string>();
}

class Fetcher {
 public:
  Fetcher(Transport& transport, const IngestionSource& source, const FetchOptions& options, FetchState& state)
      : transport_(transport), source_(source), options_(options), state_(state) {}

  std::size_t requests() const noexcept { return requests_; }

  std::string get(const std::string& path) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (requests_ >= source_.request_budget) {
        stop("request budget of " + std::to_string(source_.request_budget) + " exhausted");
      }
      ++requests_;
      const auto r = transport_.get(path);
      if (r.status == 200) return r.body;
      if (r.status == 401) throw AuthError("authentication rejected for " + path);
      const auto remaining = r.headers.find("x-ratelimit-remaining");
      const bool limited = r.status == 429 || (r.status == 403 && remaining != r.headers.end() && remaining->second == "0");
      if (limited) stop("server rate limit reached at " + path);
      if (r.status == 403) throw AuthError("access forbidden for " + path);
      const bool transient = r.status == 0 || r.status >= 500;
      if (!transient) throw Error("HTTP " + std::to_string(r.status) + " for " + path);
      if (attempt >= source_.max_retries) {
        throw Error("giving up on " + path + " after " + std::to_string(attempt + 1) + " attempts (HTTP " +
                    std::to_string(r.status) + ")");
      }
      const auto delay = source_.backoff_ms << attempt;
      spdlog::warn("HTTP {} for {}; retrying in {} ms", r.status, path, delay);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
  }

 private:
  [[noreturn]] void stop(const std::string& why) {
    if (!options_.cursor_file.empty()) {
      if (options_.cursor_file.has_parent_path()) fs::create_directories(options_.cursor_file.parent_path());
      write_file(options_.cursor_file, state_.to_json().dump());
    }
    throw RateLimitError(why + "; progress saved to " + options_.cursor_file.string(), options_.cursor_file);
  }

  Transport& transport_;
  const IngestionSource& source_;
  const FetchOptions& options_;
  FetchState& state_;
  std::size_t requests_ = 0;
};

}  // namespace

std::uint64_t network_operations() noexcept { return g_network_ops.load(); }

HttpTransport::HttpTransport(std::string base_url, std::string token)
    : base_url_(std::move(base_url)), token_(std::move(token)) {}

HttpResponse HttpTransport::get(const std::string& path) {
  ++g_network_ops;
  httplib::Client client(base_url_);
  client.set_connection_timeout(30);
  client.set_read_timeout(60);
  const httplib::Headers headers{{"Authorization", "Bearer " + token_},
                                 {"Accept", "application/vnd.github+json"},
                                 {"User-Agent", "trace-cli"}};
  HttpResponse out;
  auto res = client.Get(path, headers);
  if (!res) return out;
  out.status = res->status;
  out.body = res->body;
  for (const auto& [k, v] : res->headers) out.headers[lower(k)] = v;
  return out;
}

std::string fixture_key(const std::string& path) { return sha256_hex(path).substr(0, 16); }

OfflineTransport::OfflineTransport(fs::path dir) : dir_(std::move(dir)) {}

HttpResponse OfflineTransport::get(const std::string& path) {
  const auto key = fixture_key(path);
  const auto body_file = dir_ / (key + ".json");
  if (!fs::exists(body_file)) {
    throw IoError("no recorded response for " + path + " (expected " + body_file.string() + ")");
  }
  HttpResponse out;
  out.status = 200;
  out.body = read_file(body_file);
  const auto meta_file = dir_ / (key + ".meta.json");
  if (fs::exists(meta_file)) {
    const auto meta = json::parse(read_file(meta_file));
    out.status = meta.value("status", 200);
    if (meta.contains("headers")) {
      for (const auto& [k, v] : meta.at("headers").items()) out.headers[lower(k)] = v.get<std::string>();
    }
  }
  return out;
}

RecordingTransport::RecordingTransport(Transport& inner, fs::path dir) : inner_(inner), dir_(std::move(dir)) {}

HttpResponse RecordingTransport::get(const std::string& path) {
  auto r = inner_.get(path);
  if (r.status != 0 && r.status < 500) write_fixture_response(dir_, path, r);
  return r;
}

void write_fixture_response(const fs::path& dir, const std::string& path, const HttpResponse& response) {
  fs::create_directories(dir);
  const auto key = fixture_key(path);
  write_file(dir / (key + ".json"), response.body);
  const auto meta_file = dir / (key + ".meta.json");
  if (response.status != 200) {
    json meta{{"status", response.status}, {"headers", response.headers}};
    write_file(meta_file, meta.dump(2) + "\n");
  } else {
    fs::remove(meta_file);
  }
  std::ofstream index(dir / "index.tsv", std::ios::app);
  index << key << '\t' << path << '\n';
}

void IngestionSource::validate() const {
  const auto slash = repo.find('/');
  if (slash == std::string::npos || slash == 0 || slash + 1 == repo.size() ||
      repo.find('/', slash + 1) != std::string::npos) {
    throw ConfigError("repository must look like owner/name, got '" + repo + "'");
  }
  if (page_size == 0 || page_size > 100) throw ConfigError("page size must be in [1, 100]");
  if (request_budget == 0) throw ConfigError("request budget must be positive");
  if (mode == IngestMode::Offline) {
    if (!fixture_dir) throw ConfigError("offline mode requires a fixture directory");
    if (!fs::is_directory(*fixture_dir)) {
      throw ConfigError("fixture directory " + fixture_dir->string() + " does not exist");
    }
  } else if (token_env.empty()) {
    throw ConfigError("API mode requires the name of a token environment variable");
  }
}

std::unique_ptr<Transport> make_transport(const IngestionSource& source) {
  source.validate();
  if (source.mode == IngestMode::Offline) return std::make_unique<OfflineTransport>(*source.fixture_dir);
  const char* token = std::getenv(source.token_env.c_str());
  if (token == nullptr || *token == '\0') {
    throw ConfigError("environment variable " + source.token_env + " holding the API token is unset");
  }
  return std::make_unique<HttpTransport>(source.api_url, token);
}

RawRepository fetch_repository(Transport& transport, const IngestionSource& source, const FetchOptions& options) {
  source.validate();
  FetchState state;
  state.repo = source.repo;
  if (!options.cursor_file.empty() && fs::exists(options.cursor_file)) {
    try {
      state = state_from_json(json::parse(read_file(options.cursor_file)));
    } catch (const json::exception& e) {
      throw ParseError(options.cursor_file.string(), 1, e.what());
    }
    if (state.repo != source.repo) {
      throw ConfigError("cursor " + options.cursor_file.string() + " belongs to " + state.repo);
    }
    spdlog::info("resuming fetch of {} from {}", source.repo, options.cursor_file.string());
  }
  Fetcher fetcher(transport, source, options, state);
  const auto per_page = source.page_size;

  while (!state.issues_done) {
    const auto path = issues_path(source.repo, state.issue_page, per_page);
    const auto page = parse_payload(fetcher.get(path), path);
    if (!page.is_array()) throw PayloadError(path + ": expected an array of issues");
    std::vector<Artifact> batch;
    for (const auto& item : page) {
      if (!item.is_object()) throw PayloadError(path + ": issue entry is not an object");
      if (item.contains("pull_request")) continue;
      if (!item.contains("number") || !item.at("number").is_number_integer()) {
        throw PayloadError(path + ": issue without an integer number");
      }
      batch.push_back(make_issue(std::to_string(item.at("number").get<std::int64_t>()),
                                 text_field(item, "title", path), text_field(item, "body", path)));
    }
    for (auto& a : batch) state.issues.push_back(std::move(a));
    ++state.issue_page;
    if (state.issues.size() >= options.max_issues) {
      state.issues.resize(options.max_issues);
      state.issues_done = true;
    }
    if (page.size() < per_page) state.issues_done = true;
  }

  while (!state.commits_done) {
    const auto path = commits_path(source.repo, state.commit_page, per_page);
    const auto page = parse_payload(fetcher.get(path), path);
    if (!page.is_array()) throw PayloadError(path + ": expected an array of commits");
    for (const auto& item : page) {
      if (!item.is_object()) throw PayloadError(path + ": commit entry is not an object");
      state.shas.push_back(text_field(item, "sha", path));
    }
    ++state.commit_page;
    if (page.size() < per_page) state.commits_done = true;
  }

  while (state.commits.size() < state.shas.size()) {
    const auto& sha = state.shas[state.commits.size()];
    const auto path = commit_path(source.repo, sha);
    const auto detail = parse_payload(fetcher.get(path), path);
    if (!detail.is_object() || !detail.contains("commit") || !detail.at("commit").is_object()) {
      throw PayloadError(path + ": expected a commit object");
    }
    const auto message = text_field(detail.at("commit"), "message", path);
    std::string diff;
    if (detail.contains("files")) {
      if (!detail.at("files").is_array()) throw PayloadError(path + ": 'files' is not an array");
      for (const auto& f : detail.at("files")) {
        const auto name = text_field(f, "filename", path);
        diff += "diff --git a/" + name + " b/" + name + "\n--- a/" + name + "\n+++ b/" + name + "\n";
        if (f.contains("patch")) {
          diff += text_field(f, "patch", path);
          if (!diff.empty() && diff.back() != '\n') diff += '\n';
        }
      }
    }
    state.commits.push_back(make_commit(sha, message, std::move(diff)));
  }

  if (!options.cursor_file.empty() && fs::exists(options.cursor_file)) fs::remove(options.cursor_file);
  RawRepository out;
  out.issues = std::move(state.issues);
  out.commits = std::move(state.commits);
  out.requests = fetcher.requests();
  return out;
}

void write_project_fixture(const Project& project, const std::string& repo, const fs::path& dir,
                           std::size_t page_size) {
  if (page_size == 0) throw ConfigError("page size must be positive");
  fs::create_directories(dir);
  std::map<std::string, std::size_t> number_of;
  for (std::size_t i = 0; i < project.nl.size(); ++i) number_of[project.nl[i].id] = i + 1;
  std::map<std::string, std::vector<std::size_t>> refs;
  for (const auto& l : project.gold.links) refs[l.target].push_back(number_of.at(l.source));

  auto write_pages = [&](const std::vector<json>& items, auto&& path_of) {
    for (std::size_t page = 1;; ++page) {
      json arr = json::array();
      for (std::size_t i = (page - 1) * page_size; i < std::min(items.size(), page * page_size); ++i) {
        arr.push_back(items[i]);
      }
      write_fixture_response(dir, path_of(page), HttpResponse{200, arr.dump(), {}});
      if (arr.size() < page_size) break;
    }
  };

  std::vector<json> issues;
  for (std::size_t i = project.nl.size(); i-- > 0;) {
    const auto& a = project.nl[i];
    std::string body;
    for (std::size_t s = 1; s < a.segments.size(); ++s) body += (s > 1 ? "\n" : "") + a.segments[s].text;
    issues.push_back({{"number", i + 1},
                      {"title", a.segments.empty() ? "" : a.segments[0].text},
                      {"body", body},
                      {"state", "closed"}});
  }
  write_pages(issues, [&](std::size_t p) { return issues_path(repo, p, page_size); });

  std::vector<json> commits;
  for (const auto& a : project.pl) {
    const auto sha = sha256_hex(a.id).substr(0, 40);
    std::string message = "update", patch;
    for (const auto& s : a.segments) {
      if (s.label == "commit_message") {
        message = s.text;
      } else {
        patch += s.text;
      }
    }
    if (auto it = refs.find(a.id); it != refs.end()) {
      message += "\n";
      for (auto n : it->second) message += "\nFixes #" + std::to_string(n);
    }
    commits.push_back({{"sha", sha}});
    json detail{{"sha", sha},
                {"commit", {{"message", message}}},
                {"files", json::array({{{"filename", "src/" + a.id + ".py"}, {"patch", patch}}})}};
    write_fixture_response(dir, commit_path(repo, sha), HttpResponse{200, detail.dump(), {}});
  }
  write_pages(commits, [&](std::size_t p) { return commits_path(repo, p, page_size); });
}

}  // namespace tracer::cli
