#include "qpeft/evalrank/rerank.hpp"

#include <algorithm>

namespace qpeft {

namespace {

std::vector<RunEntry> rerank_one(const std::string& qid, const std::vector<RunEntry>& cands,
                                 const PairScorer& scorer, std::size_t depth) {
  const std::size_t k = std::min(depth, cands.size());
  std::vector<RunEntry> block;
  block.reserve(cands.size());
  for (std::size_t i = 0; i < k; ++i) block.push_back({cands[i].doc_id, scorer(qid, cands[i].doc_id)});
  sort_entries(block);
  double floor = block.empty() ? 0.0 : block.back().score;
  for (std::size_t i = k; i < cands.size(); ++i) {
    floor -= 1.0;
    block.push_back({cands[i].doc_id, floor});
  }
  return block;
}

}  // namespace

RerankResult rerank(const ScoredRun& candidates, const PairScorer& scorer, std::size_t depth,
                    const std::vector<std::string>& query_ids) {
  RerankResult out;
  if (query_ids.empty()) {
    for (const auto& [qid, cands] : candidates) out.run[qid] = rerank_one(qid, cands, scorer, depth);
    return out;
  }
  for (const auto& qid : query_ids) {
    auto it = candidates.find(qid);
    if (it == candidates.end()) {
      ++out.missing_queries;
      continue;
    }
    out.run[qid] = rerank_one(qid, it->second, scorer, depth);
  }
  return out;
}

}  // namespace qpeft
