#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qpeft/textdata/collections.hpp"

namespace qpeft {

/// Mix of sequences the frozen scorer is pretrained on.
///
/// Besides the corpus documents themselves, every corpus document yields
/// `fresh_per_doc` generated examples laid out like a scoring input:
///   [doc ; block ; prompt ; lead ; query]
/// The doc is `length(random corpus doc)` tokens drawn from the corpus
/// unigram distribution, so it cannot be memorized. The block sits where
/// hints go and holds 2..5 doc tokens drawn with probability proportional to
/// 1/df. Each of the 2..4 query terms repeats a block token with probability
/// `block_copy_rate` and is otherwise another 1/df-weighted doc token.
struct PretrainMix {
  int fresh_per_doc = 10;
  double block_copy_rate = 0.8;
  int min_query_terms = 2;
  int max_query_terms = 4;
  std::uint64_t seed = 0;
};

/// `prompts` and `lead_tokens` (e.g. question words) must be non-empty.
std::vector<TokenSeq> pretraining_sequences(const Corpus& corpus, std::span<const TokenSeq> prompts,
                                            std::span<const TokenId> lead_tokens, const PretrainMix& mix);

}  // namespace qpeft
