#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tracer/corpus.hpp"
#include "tracer/error.hpp"

namespace tracer::cli {

/// Rejected credentials (HTTP 401, or 403 without rate-limit headers).
class AuthError : public Error {
 public:
  using Error::Error;
};

/// The request budget or the server's rate limit ran out. The fetch state
/// has been written to `cursor` and a rerun with the same output resumes.
class RateLimitError : public Error {
 public:
  RateLimitError(const std::string& what, std::filesystem::path cursor)
      : Error(what), cursor_(std::move(cursor)) {}
  const std::filesystem::path& cursor() const noexcept { return cursor_; }

 private:
  std::filesystem::path cursor_;
};

/// A response body that is not the JSON shape the endpoint promises.
class PayloadError : public Error {
 public:
  using Error::Error;
};

struct HttpResponse {
  int status = 0;  ///< 0 when the connection failed
  std::string body;
  std::map<std::string, std::string> headers;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// `path` is the request target, e.g. "/repos/o/r/issues?page=1".
  virtual HttpResponse get(const std::string& path) = 0;
};

/// Number of requests put on the wire by HttpTransport in this process.
std::uint64_t network_operations() noexcept;

/// Live hosted-repository API over HTTP(S).
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string token);
  HttpResponse get(const std::string& path) override;

 private:
  std::string base_url_;
  std::string token_;
};

/// File name of the recorded response for a request path.
std::string fixture_key(const std::string& path);

/// Replays <dir>/<key>.json. An optional <dir>/<key>.meta.json holds
/// {"status": N, "headers": {...}} for recorded non-200 responses.
class OfflineTransport : public Transport {
 public:
  explicit OfflineTransport(std::filesystem::path dir);
  HttpResponse get(const std::string& path) override;

 private:
  std::filesystem::path dir_;
};

/// Forwards to `inner` and stores every response except transient server
/// failures in fixture format.
class RecordingTransport : public Transport {
 public:
  RecordingTransport(Transport& inner, std::filesystem::path dir);
  HttpResponse get(const std::string& path) override;

 private:
  Transport& inner_;
  std::filesystem::path dir_;
};

/// Writes one response in fixture format and appends it to index.tsv.
void write_fixture_response(const std::filesystem::path& dir, const std::string& path,
                            const HttpResponse& response);

enum class IngestMode { Api, Offline };

struct IngestionSource {
  IngestMode mode = IngestMode::Offline;
  std::string repo;  ///< "owner/name"
  std::optional<std::filesystem::path> fixture_dir;
  /// Name of the environment variable holding the API token.
  std::string token_env = "GITHUB_TOKEN";
  std::string api_url = "https://api.github.com";
  /// Requests allowed in one invocation.
  std::size_t request_budget = 5000;
  std::size_t page_size = 100;
  std::size_t max_retries = 3;
  std::size_t backoff_ms = 1000;

  /// Throws ConfigError when the mode's requirements are unmet. Reads no
  /// network and no token.
  void validate() const;
};

struct FetchOptions {
  std::size_t max_issues = 5000;
  /// Fetch state for resuming after a rate-limit stop.
  std::filesystem::path cursor_file;
};

struct RawRepository {
  std::vector<Artifact> issues;
  std::vector<Artifact> commits;
  std::size_t requests = 0;
};

/// Paginated fetch of issues (pull requests skipped) and commits with their
/// diffs. Issue pagination stops once max_issues have been collected.
RawRepository fetch_repository(Transport& transport, const IngestionSource& source,
                               const FetchOptions& options);

/// Transport for a validated source. API mode reads the token from the
/// environment and throws ConfigError when it is unset.
std::unique_ptr<Transport> make_transport(const IngestionSource& source);

/// Renders a trace project as recorded API responses: NL artifacts become
/// issues numbered in order, PL artifacts become commits whose messages
/// reference their linked issues.
void write_project_fixture(const Project& project, const std::string& repo,
                           const std::filesystem::path& dir, std::size_t page_size = 100);

}  // namespace tracer::cli
