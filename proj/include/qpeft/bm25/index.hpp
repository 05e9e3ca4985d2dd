#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qpeft/bm25/run_file.hpp"
#include "qpeft/textdata/collections.hpp"

namespace qpeft {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Posting {
  std::uint32_t doc = 0;  // corpus index
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Token-id inverted index over tokenized title + text. Reserved ids
/// (including UNK) count toward document length but are never indexed.
class InvertedIndex {
public:
  static InvertedIndex build(const Corpus& corpus);

  std::span<const Posting> postings(TokenId t) const;
  std::uint32_t df(TokenId t) const { return static_cast<std::uint32_t>(postings(t).size()); }
  std::uint32_t tf(TokenId t, std::size_t doc) const;
  std::size_t num_docs() const { return doc_ids_.size(); }
  std::uint32_t doc_length(std::size_t doc) const { return doc_lengths_.at(doc); }
  double avgdl() const { return avgdl_; }
  const std::string& doc_id(std::size_t doc) const { return doc_ids_.at(doc); }

  /// ln(1 + (N - df + 0.5) / (df + 0.5)); nonnegative.
  double idf(TokenId t) const;

  void save(const std::string& path) const;  // JSON
  static InvertedIndex load(const std::string& path);

  bool operator==(const InvertedIndex&) const = default;

private:
  std::vector<std::vector<Posting>> postings_;  // indexed by token id
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<std::string> doc_ids_;
  double avgdl_ = 0.0;
};

/// Okapi BM25 of one document; repeated query terms count repeatedly.
double bm25_score(std::span<const TokenId> query_ids, std::size_t doc, const InvertedIndex& index,
                  const Bm25Params& params = {});

/// Exact top-K over all documents sharing at least one query term,
/// ordered by score desc then doc_id asc.
std::vector<RunEntry> search(std::span<const TokenId> query_ids, const InvertedIndex& index,
                             std::size_t k, const Bm25Params& params = {});

/// search() for every query.
ScoredRun retrieve(const std::vector<Query>& queries, const InvertedIndex& index, std::size_t k,
                   const Bm25Params& params = {});

}  // namespace qpeft
