#include "manifest.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <sstream>

#include "tracer/error.hpp"
#include "tracer/hash.hpp"

namespace tracer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json RunManifest::to_json() const {
  return json{{"command", command},      {"argv", argv},
              {"config", config},        {"seeds", seeds},
              {"input_hashes", input_hashes}, {"details", details},
              {"tool_version", tool_version}, {"started_at", started_at},
              {"finished_at", finished_at}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.at("config").get<std::string>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
  m.details = j.value("details", json::object());
  m.tool_version = j.at("tool_version").get<std::string>();
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  return m;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hash_path(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("cannot hash missing path " + path.string());
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), path));
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) listing += f.generic_string() + '\t' + sha256_file(path / f) + '\n';
  return sha256_hex(listing);
}

void write_manifest(const RunManifest& manifest, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.to_json().dump(2) << '\n';
}

RunManifest read_manifest(const fs::path& dir) {
  const auto file = dir / "manifest.json";
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(file.string(), 1, e.what());
  }
}

}  // namespace tracer::cli
