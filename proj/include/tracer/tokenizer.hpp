#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tracer {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecialTokens = 5;
inline constexpr int kNoLabel = -1;

/// Splits on whitespace, underscores (dropped), punctuation (kept as
/// single-character tokens) and camelCase boundaries:
/// "parseJSON" -> ["parse", "JSON"], "JSONParser" -> ["JSON", "Parser"].
std::vector<std::string> pre_tokenize(std::string_view text);

/// Subword vocabulary. Word-internal pieces carry a "##" prefix. Ids are
/// dense; ids 0-4 are [PAD], [UNK], [CLS], [SEP], [MASK].
class Vocab {
 public:
  /// Byte-pair merges over the pre-tokens of `corpus`, stopping at
  /// target_size entries or when no pair occurs min_freq times.
  static Vocab build(std::span<const std::string> corpus, std::size_t target_size,
                     std::size_t min_freq = 2);
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  int id(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Greedy longest-match segmentation of each pre-token; a pre-token that
  /// cannot be fully covered becomes a single [UNK].
  std::vector<int> tokenize(std::string_view text) const;

  /// Rebuilds the pre-token stream from ids, skipping special tokens.
  std::vector<std::string> decode(std::span<const int> ids) const;

  /// SHA-256 over the token list; identifies the vocabulary in manifests.
  std::string hash() const;

 private:
  explicit Vocab(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_token_bytes_ = 0;
};

/// Model input. Lengths of all four fields agree; attention_mask is 0
/// exactly on padding.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;
  std::vector<int> segment_ids;
  std::vector<std::size_t> special_positions;

  std::size_t length() const noexcept { return ids.size(); }
  /// Number of non-pad positions.
  std::size_t valid_length() const noexcept;
  bool operator==(const TokenSequence&) const = default;
};

/// [CLS] body [SEP] padded to max_len; the body is cut so the final [SEP]
/// survives.
TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len);
TokenSequence encode_ids(std::span<const int> body, std::size_t max_len);

/// [CLS] nl [SEP] pl [SEP] padded to max_len with segment ids 0/1. When too
/// long, the longer side is trimmed one token at a time (ties trim pl).
TokenSequence encode_pair(std::string_view nl, std::string_view pl, const Vocab& vocab,
                          std::size_t max_len);
TokenSequence encode_pair_ids(std::span<const int> nl, std::span<const int> pl,
                              std::size_t max_len);

/// Drops trailing padding. Outputs at the remaining positions are
/// unaffected, since padded keys are masked out of attention.
TokenSequence trim_padding(const TokenSequence& seq);

struct MaskedSequence {
  TokenSequence seq;
  std::vector<int> labels;  ///< original id at selected positions, kNoLabel elsewhere
};

/// Selects round(rate × maskable) non-special, non-pad positions uniformly
/// without replacement. Of those, 10% (rounded) get a random non-special id,
/// 10% (rounded) stay unchanged and the rest become [MASK].
MaskedSequence mask_tokens(const TokenSequence& seq, std::size_t vocab_size, double rate,
                           std::uint64_t seed);

}  // namespace tracer
