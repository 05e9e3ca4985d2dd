#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qpeft/bm25/run_file.hpp"

namespace qpeft {

/// Score for (query_id, doc_id); must be pure.
using PairScorer = std::function<double(const std::string& query_id, const std::string& doc_id)>;

struct RerankResult {
  ScoredRun run;
  long missing_queries = 0;  // requested but absent from the candidates
};

/// Rescores the top `depth` candidates of each query and sorts them by
/// (score desc, doc_id asc). Candidates below the depth keep their
/// first-stage order after the reranked block, with scores continuing
/// strictly below the block minimum so the run stays sorted.
/// With an empty `query_ids`, every query in `candidates` is reranked.
RerankResult rerank(const ScoredRun& candidates, const PairScorer& scorer, std::size_t depth,
                    const std::vector<std::string>& query_ids = {});

}  // namespace qpeft
