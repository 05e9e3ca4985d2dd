#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qpeft/textdata/collections.hpp"

namespace qpeft {

/// Knobs of the desk-scale generator. Documents draw tokens from a common
/// pool, a per-topic pool and three document-specific salient words; each
/// query is a question word plus salient and topic tokens of its positive.
struct SyntheticConfig {
  std::uint64_t seed = 0;
  int num_docs = 500;
  int num_queries = 300;
  int vocab_size = 300;  // content words (question words and reserved ids excluded)
  int negatives_per_query = 10;
  int num_topics = 10;
  int min_doc_len = 30;
  int max_doc_len = 50;
  int salient_per_doc = 3;
  int salient_per_query = 2;
  double common_rate = 0.25;
  double salient_rate = 0.15;
  double query_noise = 0.3;  // chance of one extra unrelated common word
};

struct SyntheticData {
  Corpus corpus;
  std::vector<Query> queries;  // all splits, in id order
  Dataset train;
  Dataset eval;
  Dataset test;
  Qrels qrels;
  Answers answers;
  Vocab vocab;  // built from corpus, queries and `extra_vocab_texts`
};

/// Deterministic for a given config. Splits are 4:1:1 by query count
/// (eval = test = num_queries / 6). Throws ContractError on infeasible sizes.
SyntheticData make_synthetic_dataset(const SyntheticConfig& config,
                                     const std::vector<std::string>& extra_vocab_texts = {});

}  // namespace qpeft
