#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qpeft {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr int kNumReserved = 4;

/// Bidirectional token <-> id map. Ids 0..3 are PAD, BOS, EOS, UNK.
class Vocab {
public:
  Vocab();

  /// Appends a token; returns its id (existing id if already present).
  TokenId add(std::string_view token);

  TokenId id(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line; line number = id. Reserved tokens included.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Lowercased word pieces: maximal runs of ASCII letters/digits and any
/// non-ASCII bytes. Everything else separates words and is dropped.
std::vector<std::string> split_words(std::string_view text);

/// Maps words to ids; out-of-vocabulary words become UNK. Never emits PAD/BOS/EOS.
TokenSeq tokenize(std::string_view text, const Vocab& vocab);

/// Space-joined tokens for a sequence.
std::string detokenize(const TokenSeq& ids, const Vocab& vocab);

/// Vocabulary ranked by descending frequency over all texts, ties broken
/// lexicographically, truncated so that size() <= max_size.
Vocab build_vocab(const std::vector<std::string>& texts, int max_size);

}  // namespace qpeft
