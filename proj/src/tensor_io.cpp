#include "tracer/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "tracer/error.hpp"

namespace tracer {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'R', 'C', 'T', 'E', 'N', 'S', '1'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_tensors(const std::filesystem::path& file, const std::string& kind, const json& meta,
                  const std::vector<std::pair<std::string, const Matrix<float>*>>& tensors) {
  json table = json::array();
  for (const auto& [name, m] : tensors) {
    table.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  }
  const json header = {{"kind", kind}, {"dtype", "float32"}, {"meta", meta}, {"tensors", table}};
  const std::string text = header.dump();
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  const std::uint64_t header_len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof(kFormatVersion));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : tensors) {
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(m->size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + file.string());
}

TensorFile load_tensors(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(file.string(), 1, "not a tensor file");
  }
  if (version != kFormatVersion) {
    throw ParseError(file.string(), 1, "unsupported format version " + std::to_string(version));
  }
  if (header_len > (1u << 26)) throw ParseError(file.string(), 1, "implausible header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ParseError(file.string(), 1, "truncated header");
  TensorFile result;
  try {
    const json header = json::parse(text);
    result.kind = header.at("kind").get<std::string>();
    result.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      Matrix<float> m(entry.at("rows").get<std::size_t>(), entry.at("cols").get<std::size_t>());
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
      if (!in) throw ParseError(file.string(), 1, "truncated payload");
      result.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
    }
  } catch (const json::exception& e) {
    throw ParseError(file.string(), 1, e.what());
  }
  return result;
}

void assign_tensors(const TensorFile& file,
                    const std::vector<std::pair<std::string, Matrix<float>*>>& targets) {
  if (file.tensors.size() != targets.size()) {
    throw ValidationError("tensor file holds " + std::to_string(file.tensors.size()) +
                          " tensors, expected " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& [name, m] = file.tensors[i];
    if (name != targets[i].first || !m.same_shape(*targets[i].second)) {
      throw ValidationError("tensor " + targets[i].first + " does not match the stored " + name);
    }
    *targets[i].second = m;
  }
}

}  // namespace tracer
