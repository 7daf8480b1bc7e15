#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "tracer/error.hpp"
#include "tracer/rng.hpp"
#include "tracer/tokenizer.hpp"

using namespace tracer;

namespace {

using Strings = std::vector<std::string>;

Vocab word_vocab(const Strings& words) {
  Strings tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocab::from_tokens(tokens);
}

std::size_t count(const std::vector<int>& v, int x) { return static_cast<std::size_t>(std::count(v.begin(), v.end(), x)); }

TokenSequence body_of(std::size_t n) {
  std::vector<int> body;
  for (std::size_t i = 0; i < n; ++i) body.push_back(5 + static_cast<int>(i % 20));
  return encode_ids(body, n + 2);
}

}  // namespace

TEST(PreTokenize, CamelCaseUnderscoresAndPunctuation) {
  EXPECT_EQ(pre_tokenize("parseJSON"), (Strings{"parse", "JSON"}));
  EXPECT_EQ(pre_tokenize("JSONParser"), (Strings{"JSON", "Parser"}));
  EXPECT_EQ(pre_tokenize("snake_case_name"), (Strings{"snake", "case", "name"}));
  EXPECT_EQ(pre_tokenize("f(x, y);"), (Strings{"f", "(", "x", ",", "y", ")", ";"}));
  EXPECT_EQ(pre_tokenize("  \t\n "), Strings{});
}

TEST(BuildVocab, MergesFrequentPair) {
  const Strings corpus{"aa aa aa"};
  const auto vocab = Vocab::build(corpus, 10, 2);
  EXPECT_GE(vocab.id("aa"), 0);
  EXPECT_LE(vocab.size(), 10u);
  EXPECT_EQ(vocab.tokenize("aa"), (std::vector<int>{vocab.id("aa")}));
}

TEST(BuildVocab, Errors) {
  const Strings corpus{"aa aa"};
  EXPECT_THROW(Vocab::build(corpus, 5), ConfigError);
  EXPECT_THROW(Vocab::build(Strings{}, 100), ValidationError);
  EXPECT_THROW(Vocab::build(Strings{"   "}, 100), ValidationError);
}

TEST(BuildVocab, SpecialsFirstIdsDenseAndStopsAtTarget) {
  const Strings corpus{"def parse_request(self): return self.parser.parse(request)",
                       "fix the request parser crash when the body is empty",
                       "parseRequest handles JSON bodies"};
  const auto vocab = Vocab::build(corpus, 40, 1);
  EXPECT_LE(vocab.size(), 40u);
  const Strings specials{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (int i = 0; i < kNumSpecialTokens; ++i) EXPECT_EQ(vocab.token(i), specials[i]);
  for (std::size_t i = 0; i < vocab.size(); ++i) EXPECT_EQ(vocab.id(vocab.token(static_cast<int>(i))), static_cast<int>(i));
  // With room for the whole alphabet no corpus text produces [UNK].
  const auto roomy = Vocab::build(corpus, 200, 1);
  for (const auto& text : corpus) EXPECT_EQ(count(roomy.tokenize(text), kUnkId), 0u) << text;
}

TEST(VocabIo, FileRoundTripAndHash) {
  const auto vocab = Vocab::build(Strings{"alpha beta gamma alpha beta"}, 30, 1);
  const auto file = std::filesystem::temp_directory_path() / "tracer_vocab_test.txt";
  vocab.save(file);
  const auto loaded = Vocab::load(file);
  EXPECT_EQ(loaded.tokens(), vocab.tokens());
  EXPECT_EQ(loaded.hash(), vocab.hash());
  EXPECT_EQ(vocab.hash().size(), 64u);
  EXPECT_NE(word_vocab({"x"}).hash(), word_vocab({"y"}).hash());
  std::ofstream(file) << "[PAD]\n[CLS]\n";
  EXPECT_THROW(Vocab::load(file), ValidationError);
  std::filesystem::remove(file);
}

TEST(VocabIo, RejectsDuplicatesAndWrongSpecials) {
  EXPECT_THROW(word_vocab({"a", "a"}), ValidationError);
  EXPECT_THROW(Vocab::from_tokens({"[UNK]", "[PAD]", "[CLS]", "[SEP]", "[MASK]"}), ValidationError);
}

TEST(Tokenize, LongestMatchAndUnknownPreTokens) {
  const auto vocab = word_vocab({"get", "##ter", "##t", "x"});
  EXPECT_EQ(vocab.tokenize("getter x"), (std::vector<int>{5, 6, 8}));
  EXPECT_EQ(vocab.tokenize("gets"), (std::vector<int>{kUnkId}));
  EXPECT_EQ(vocab.decode(vocab.tokenize("getter x")), (Strings{"getter", "x"}));
}

TEST(Encode, EmptyTextIsClsSepAndPadding) {
  const auto vocab = word_vocab({"a"});
  const auto seq = encode("", vocab, 6);
  EXPECT_EQ(seq.ids, (std::vector<int>{kClsId, kSepId, kPadId, kPadId, kPadId, kPadId}));
  EXPECT_EQ(seq.attention_mask, (std::vector<int>{1, 1, 0, 0, 0, 0}));
  EXPECT_EQ(seq.segment_ids, std::vector<int>(6, 0));
  EXPECT_EQ(seq.valid_length(), 2u);
}

TEST(Encode, TruncationKeepsFinalSep) {
  const auto vocab = word_vocab({"a", "b"});
  const auto seq = encode("a b a b a b a b", vocab, 5);
  EXPECT_EQ(seq.ids, (std::vector<int>{kClsId, 5, 6, 5, kSepId}));
  EXPECT_EQ(seq.attention_mask, std::vector<int>(5, 1));
  EXPECT_THROW(encode("a", vocab, 2), ConfigError);
}

TEST(Encode, KnownTokensRoundTrip) {
  const auto vocab = word_vocab({"open", "Fi", "##le", "read", "(", ")"});
  const std::string text = "openFile ( read )";
  const auto seq = encode(text, vocab, 16);
  std::vector<int> body(seq.ids.begin() + 1, seq.ids.begin() + static_cast<long>(seq.valid_length()) - 1);
  EXPECT_EQ(vocab.decode(body), pre_tokenize(text));
  EXPECT_EQ(vocab.decode(seq.ids), pre_tokenize(text));
}

TEST(EncodePair, MinimalFormat) {
  const auto vocab = word_vocab({"a", "b"});
  const auto seq = encode_pair("a", "b", vocab, 5);
  EXPECT_EQ(seq.ids, (std::vector<int>{kClsId, 5, kSepId, 6, kSepId}));
  EXPECT_EQ(seq.segment_ids, (std::vector<int>{0, 0, 0, 1, 1}));
  EXPECT_THROW(encode_pair("a", "b", vocab, 4), ConfigError);
}

TEST(EncodePair, EmptyNlStillValid) {
  const auto vocab = word_vocab({"a", "b"});
  const auto seq = encode_pair("", "a b", vocab, 8);
  EXPECT_EQ(seq.ids, (std::vector<int>{kClsId, kSepId, 5, 6, kSepId, kPadId, kPadId, kPadId}));
  EXPECT_EQ(seq.segment_ids, (std::vector<int>{0, 0, 1, 1, 1, 0, 0, 0}));
}

TEST(EncodePair, TrimsLongerSideFirstAndTiesTrimPl) {
  std::vector<int> nl(10, 5), pl(10, 6);
  auto seq = encode_pair_ids(nl, pl, 13);  // 10 body slots
  EXPECT_EQ(count(seq.ids, 5), 5u);
  EXPECT_EQ(count(seq.ids, 6), 5u);
  seq = encode_pair_ids(nl, pl, 12);  // 9 body slots: tie trims PL
  EXPECT_EQ(count(seq.ids, 5), 5u);
  EXPECT_EQ(count(seq.ids, 6), 4u);
  std::vector<int> short_nl(2, 5);
  seq = encode_pair_ids(short_nl, pl, 9);
  EXPECT_EQ(count(seq.ids, 5), 2u);
  EXPECT_EQ(count(seq.ids, 6), 4u);
}

TEST(EncodePair, StructureProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> nl(rng.index(40)), pl(rng.index(40));
    for (auto& x : nl) x = 5 + static_cast<int>(rng.index(30));
    for (auto& x : pl) x = 5 + static_cast<int>(rng.index(30));
    const std::size_t max_len = 5 + rng.index(60);
    const auto seq = encode_pair_ids(nl, pl, max_len);
    ASSERT_EQ(seq.length(), max_len);
    ASSERT_EQ(seq.attention_mask.size(), max_len);
    ASSERT_EQ(seq.segment_ids.size(), max_len);
    EXPECT_EQ(seq.ids[0], kClsId);
    EXPECT_EQ(count(seq.ids, kClsId), 1u);
    EXPECT_EQ(count(seq.ids, kSepId), 2u);
    for (std::size_t i = 0; i < max_len; ++i) EXPECT_EQ(seq.attention_mask[i] == 0, seq.ids[i] == kPadId);
    EXPECT_EQ(seq.valid_length(), std::min(max_len, nl.size() + pl.size() + 3));
    EXPECT_EQ(seq.special_positions.size(), 3u);
    const auto trimmed = trim_padding(seq);
    EXPECT_EQ(trimmed.length(), seq.valid_length());
  }
}

TEST(MaskTokens, FifteenOfHundred) {
  const auto seq = body_of(100);
  const auto m = mask_tokens(seq, 40, 0.15, 7);
  const auto selected = std::count_if(m.labels.begin(), m.labels.end(), [](int l) { return l != kNoLabel; });
  EXPECT_EQ(selected, 15);
  EXPECT_EQ(count(m.seq.ids, kMaskId), 11u);
  for (std::size_t i = 0; i < seq.length(); ++i) {
    if (m.labels[i] == kNoLabel) {
      EXPECT_EQ(m.seq.ids[i], seq.ids[i]);
    } else {
      EXPECT_EQ(m.labels[i], seq.ids[i]);
    }
  }
}

TEST(MaskTokens, TwentyMaskableRounding) {
  const auto m = mask_tokens(body_of(20), 40, 0.15, 1);
  EXPECT_EQ(std::count_if(m.labels.begin(), m.labels.end(), [](int l) { return l != kNoLabel; }), 3);
  EXPECT_GE(count(m.seq.ids, kMaskId), 2u);
}

TEST(MaskTokens, DeterministicForSeed) {
  const auto seq = body_of(60);
  EXPECT_EQ(mask_tokens(seq, 40, 0.15, 5).labels, mask_tokens(seq, 40, 0.15, 5).labels);
  EXPECT_NE(mask_tokens(seq, 40, 0.15, 5).labels, mask_tokens(seq, 40, 0.15, 6).labels);
}

TEST(MaskTokens, SpecialsAndPaddingNeverSelected) {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> nl(1 + rng.index(20)), pl(rng.index(20));
    for (auto& x : nl) x = 5 + static_cast<int>(rng.index(30));
    for (auto& x : pl) x = 5 + static_cast<int>(rng.index(30));
    const auto seq = encode_pair_ids(nl, pl, 48);
    const auto m = mask_tokens(seq, 35, 0.15, rng.next());
    for (std::size_t i = 0; i < seq.length(); ++i) {
      if (seq.ids[i] < kNumSpecialTokens) {
        EXPECT_EQ(m.labels[i], kNoLabel);
        EXPECT_EQ(m.seq.ids[i], seq.ids[i]);
      }
      if (m.labels[i] != kNoLabel) {
        EXPECT_GE(m.seq.ids[i], 0);
        EXPECT_LT(m.seq.ids[i], 35);
      }
    }
    EXPECT_EQ(m.seq.attention_mask, seq.attention_mask);
  }
}

TEST(MaskTokens, Errors) {
  EXPECT_THROW(mask_tokens(encode_ids(std::vector<int>{}, 4), 30, 0.15, 1), ValidationError);
  EXPECT_THROW(mask_tokens(body_of(10), 30, 0.0, 1), ConfigError);
}
