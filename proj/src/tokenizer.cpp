#include "tracer/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "tracer/error.hpp"
#include "tracer/hash.hpp"
#include "tracer/rng.hpp"

namespace tracer {
namespace {

constexpr std::string_view kContinuation = "##";
const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
// ASCII punctuation other than the underscore; bytes >= 0x80 count as letters.
bool is_punct(unsigned char c) { return c < 0x80 && c != '_' && std::ispunct(c); }

void split_camel(std::string_view word, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < word.size(); ++i) {
    const auto prev = static_cast<unsigned char>(word[i - 1]);
    const auto cur = static_cast<unsigned char>(word[i]);
    const bool lower_to_upper = is_upper(cur) && (is_lower(prev) || is_digit(prev));
    const bool acronym_end = is_upper(prev) && is_upper(cur) && i + 1 < word.size() &&
                             is_lower(static_cast<unsigned char>(word[i + 1]));
    if (lower_to_upper || acronym_end) {
      out.emplace_back(word.substr(start, i - start));
      start = i;
    }
  }
  out.emplace_back(word.substr(start));
}

// UTF-8 aware split of a word into characters.
std::vector<std::string> characters(std::string_view word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    std::size_t len = 1;
    while (i + len < word.size() && (static_cast<unsigned char>(word[i + len]) & 0xC0) == 0x80) ++len;
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::string strip_continuation(const std::string& piece) {
  return piece.starts_with(kContinuation) ? piece.substr(kContinuation.size()) : piece;
}

}  // namespace

std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c) || c == '_') {
      ++i;
    } else if (is_punct(c)) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size()) {
        const auto d = static_cast<unsigned char>(text[j]);
        if (is_space(d) || d == '_' || is_punct(d)) break;
        ++j;
      }
      split_camel(text.substr(i, j - i), out);
      i = j;
    }
  }
  return out;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ValidationError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
    max_token_bytes_ = std::max(max_token_bytes_, tokens_[i].size());
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kSpecials.size() ||
      !std::equal(kSpecials.begin(), kSpecials.end(), tokens.begin())) {
    throw ValidationError("vocabulary must start with [PAD] [UNK] [CLS] [SEP] [MASK]");
  }
  for (const auto& t : tokens) {
    if (t.empty() || t.find('\n') != std::string::npos) {
      throw ValidationError("vocabulary: empty or multi-line token");
    }
  }
  return Vocab(std::move(tokens));
}

Vocab Vocab::build(std::span<const std::string> corpus, std::size_t target_size,
                   std::size_t min_freq) {
  if (target_size <= kSpecials.size()) {
    throw ConfigError("build_vocab: target_size must exceed the 5 special tokens");
  }
  std::map<std::string, std::int64_t> word_freq;
  for (const auto& text : corpus) {
    for (auto& w : pre_tokenize(text)) ++word_freq[w];
  }
  if (word_freq.empty()) throw ValidationError("build_vocab: corpus has no tokens");

  struct Word {
    std::vector<std::string> symbols;
    std::int64_t freq;
  };
  std::vector<Word> words;
  std::map<std::string, std::int64_t> alphabet;
  for (const auto& [w, f] : word_freq) {
    Word word{characters(w), f};
    for (std::size_t i = 1; i < word.symbols.size(); ++i) word.symbols[i].insert(0, kContinuation);
    for (const auto& s : word.symbols) alphabet[s] += f;
    words.push_back(std::move(word));
  }

  std::vector<std::string> tokens = kSpecials;
  std::vector<std::pair<std::string, std::int64_t>> letters(alphabet.begin(), alphabet.end());
  std::stable_sort(letters.begin(), letters.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [s, f] : letters) {
    if (tokens.size() >= target_size) break;
    tokens.push_back(s);
  }
  std::set<std::string> known(tokens.begin(), tokens.end());

  while (tokens.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pairs;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        pairs[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
      }
    }
    // Highest count wins; map order breaks ties lexicographically.
    const std::pair<std::string, std::string>* best = nullptr;
    std::int64_t best_freq = 0;
    for (const auto& [p, f] : pairs) {
      if (f > best_freq) {
        best = &p;
        best_freq = f;
      }
    }
    if (best == nullptr || best_freq < static_cast<std::int64_t>(min_freq)) break;
    const auto [left, right] = *best;
    const std::string merged = left + strip_continuation(right);
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(next);
    }
    if (known.insert(merged).second) tokens.push_back(merged);
  }
  return Vocab(std::move(tokens));
}

Vocab Vocab::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary " + file.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + file.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
  std::vector<int> ids;
  std::string candidate;
  for (const auto& word : pre_tokenize(text)) {
    const auto chars = characters(word);
    std::vector<std::size_t> offsets(chars.size() + 1, 0);
    for (std::size_t i = 0; i < chars.size(); ++i) offsets[i + 1] = offsets[i] + chars[i].size();
    std::vector<int> pieces;
    std::size_t start = 0;
    bool ok = true;
    while (start < chars.size()) {
      int found = -1;
      std::size_t found_end = start;
      for (std::size_t end = chars.size(); end > start; --end) {
        const std::size_t bytes = offsets[end] - offsets[start];
        if (bytes > max_token_bytes_) continue;
        candidate.assign(start == 0 ? "" : kContinuation);
        candidate.append(word, offsets[start], bytes);
        if (auto it = index_.find(candidate); it != index_.end() && it->second >= kNumSpecialTokens) {
          found = it->second;
          found_end = end;
          break;
        }
      }
      if (found < 0) {
        ok = false;
        break;
      }
      pieces.push_back(found);
      start = found_end;
    }
    if (ok) {
      ids.insert(ids.end(), pieces.begin(), pieces.end());
    } else {
      ids.push_back(kUnkId);
    }
  }
  return ids;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kUnkId) {
      out.push_back(kSpecials[kUnkId]);
      continue;
    }
    if (id < kNumSpecialTokens) continue;
    const std::string& t = token(id);
    if (t.starts_with(kContinuation) && !out.empty()) {
      out.back() += t.substr(kContinuation.size());
    } else {
      out.push_back(t);
    }
  }
  return out;
}

std::string Vocab::hash() const {
  std::string joined;
  for (const auto& t : tokens_) {
    joined += t;
    joined += '\n';
  }
  return sha256_hex(joined);
}

std::size_t TokenSequence::valid_length() const noexcept {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

TokenSequence encode_ids(std::span<const int> body, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("encode: max_len must be at least 3");
  const std::size_t n = std::min(body.size(), max_len - 2);
  TokenSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(kClsId);
  seq.ids.insert(seq.ids.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(n));
  seq.ids.push_back(kSepId);
  seq.special_positions = {0, seq.ids.size() - 1};
  seq.attention_mask.assign(seq.ids.size(), 1);
  seq.ids.resize(max_len, kPadId);
  seq.attention_mask.resize(max_len, 0);
  seq.segment_ids.assign(max_len, 0);
  return seq;
}

TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("encode: max_len must be at least 3");
  return encode_ids(vocab.tokenize(text), max_len);
}

TokenSequence encode_pair_ids(std::span<const int> nl, std::span<const int> pl,
                              std::size_t max_len) {
  if (max_len < 5) throw ConfigError("encode_pair: max_len must be at least 5");
  std::size_t a = nl.size(), b = pl.size();
  const std::size_t budget = max_len - 3;
  while (a + b > budget) {
    if (a > b) {
      --a;
    } else {
      --b;
    }
  }
  TokenSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(kClsId);
  seq.ids.insert(seq.ids.end(), nl.begin(), nl.begin() + static_cast<std::ptrdiff_t>(a));
  const std::size_t first_sep = seq.ids.size();
  seq.ids.push_back(kSepId);
  seq.ids.insert(seq.ids.end(), pl.begin(), pl.begin() + static_cast<std::ptrdiff_t>(b));
  seq.ids.push_back(kSepId);
  const std::size_t used = seq.ids.size();
  seq.special_positions = {0, first_sep, used - 1};
  seq.attention_mask.assign(used, 1);
  seq.segment_ids.assign(first_sep + 1, 0);
  seq.segment_ids.resize(used, 1);
  seq.ids.resize(max_len, kPadId);
  seq.attention_mask.resize(max_len, 0);
  seq.segment_ids.resize(max_len, 0);
  return seq;
}

TokenSequence encode_pair(std::string_view nl, std::string_view pl, const Vocab& vocab,
                          std::size_t max_len) {
  if (max_len < 5) throw ConfigError("encode_pair: max_len must be at least 5");
  return encode_pair_ids(vocab.tokenize(nl), vocab.tokenize(pl), max_len);
}

TokenSequence trim_padding(const TokenSequence& seq) {
  std::size_t n = seq.length();
  while (n > 0 && seq.attention_mask[n - 1] == 0) --n;
  TokenSequence out;
  out.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n));
  out.attention_mask.assign(seq.attention_mask.begin(), seq.attention_mask.begin() + static_cast<std::ptrdiff_t>(n));
  out.segment_ids.assign(seq.segment_ids.begin(), seq.segment_ids.begin() + static_cast<std::ptrdiff_t>(n));
  out.special_positions = seq.special_positions;
  return out;
}

MaskedSequence mask_tokens(const TokenSequence& seq, std::size_t vocab_size, double rate,
                           std::uint64_t seed) {
  if (rate <= 0.0 || rate > 1.0) throw ConfigError("mask_tokens: rate must be in (0, 1]");
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < seq.length(); ++i) {
    const bool special = std::find(seq.special_positions.begin(), seq.special_positions.end(), i) !=
                         seq.special_positions.end();
    if (!special && seq.attention_mask[i] == 1 && seq.ids[i] >= kNumSpecialTokens) {
      maskable.push_back(i);
    }
  }
  if (maskable.empty()) throw ValidationError("mask_tokens: no maskable position");

  const auto selected = static_cast<std::size_t>(std::llround(rate * static_cast<double>(maskable.size())));
  const auto n_random = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(selected)));
  const auto n_keep = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(selected)));
  const std::size_t n_mask = selected - n_random - n_keep;

  Rng rng(seed);
  // Partial Fisher-Yates: the first `selected` entries are the sample.
  for (std::size_t i = 0; i < selected; ++i) {
    std::swap(maskable[i], maskable[i + rng.index(maskable.size() - i)]);
  }

  MaskedSequence out{seq, std::vector<int>(seq.length(), kNoLabel)};
  const std::uint64_t ordinary = vocab_size > kNumSpecialTokens ? vocab_size - kNumSpecialTokens : 1;
  for (std::size_t i = 0; i < selected; ++i) {
    const std::size_t pos = maskable[i];
    out.labels[pos] = seq.ids[pos];
    if (i < n_mask) {
      out.seq.ids[pos] = kMaskId;
    } else if (i < n_mask + n_random) {
      out.seq.ids[pos] = kNumSpecialTokens + static_cast<int>(rng.index(ordinary));
    }
  }
  return out;
}

}  // namespace tracer
