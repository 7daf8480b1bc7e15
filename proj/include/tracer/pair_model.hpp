#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tracer {

/// Parallel id and text lists for one side of a scoring grid.
struct TextSet {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::size_t size() const noexcept { return ids.size(); }
};

/// Anything that scores source (NL) against target (PL) artifacts. prepare()
/// indexes both sides once; score() must then be safe to call concurrently.
class PairModel {
 public:
  virtual ~PairModel() = default;

  virtual std::string name() const = 0;
  virtual void prepare(const TextSet& sources, const TextSet& targets) = 0;
  /// Indices refer to the sets given to the last prepare().
  virtual double score(std::size_t source, std::size_t target) const = 0;
  /// Encoder forward passes since construction, 0 for non-neural models.
  virtual std::uint64_t encoder_calls() const { return 0; }
};

}  // namespace tracer
