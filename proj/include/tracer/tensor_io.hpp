#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tracer/matrix.hpp"

namespace tracer {

/// Binary tensor container: 8-byte magic, u32 format version, u64 header
/// length, JSON header {kind, meta, tensors[{name, rows, cols}]}, then the
/// float32 payload in table order.
void save_tensors(const std::filesystem::path& file, const std::string& kind,
                  const nlohmann::json& meta,
                  const std::vector<std::pair<std::string, const Matrix<float>*>>& tensors);

struct TensorFile {
  std::string kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix<float>>> tensors;
};

/// Throws ParseError on a malformed or truncated file.
TensorFile load_tensors(const std::filesystem::path& file);

/// Copies `file` tensors into `targets` by position, checking names and
/// shapes. Throws ValidationError on any mismatch.
void assign_tensors(const TensorFile& file,
                    const std::vector<std::pair<std::string, Matrix<float>*>>& targets);

}  // namespace tracer
