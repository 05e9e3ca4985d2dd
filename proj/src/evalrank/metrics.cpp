#include "qpeft/evalrank/metrics.hpp"

#include <algorithm>
#include <set>

namespace qpeft {

namespace {

void finish(MetricResult& r) {
  double total = 0.0;
  for (const auto& [q, v] : r.per_query) total += v;
  r.mean = r.per_query.empty() ? 0.0 : total / static_cast<double>(r.per_query.size());
}

}  // namespace

MetricResult recall_at_k(const ScoredRun& run, const Qrels& qrels, std::size_t k) {
  MetricResult r;
  for (const auto& [qid, entries] : run) {
    const auto rel = relevant_docs(qrels, qid);
    if (rel.empty()) {
      ++r.excluded;
      continue;
    }
    const std::set<std::string> relset(rel.begin(), rel.end());
    std::size_t found = 0;
    for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) found += relset.count(entries[i].doc_id);
    r.per_query[qid] = static_cast<double>(found) / static_cast<double>(relset.size());
  }
  finish(r);
  return r;
}

bool contains_span(const std::string& text, const std::string& answer) {
  const auto needle = split_words(answer);
  if (needle.empty()) return false;
  const auto hay = split_words(text);
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

MetricResult hit_at_k(const ScoredRun& run, const Answers& answers, const Corpus& corpus, std::size_t k,
                      const Qrels* fallback) {
  MetricResult r;
  const bool use_qrels = answers.empty() && fallback != nullptr;
  r.qrels_fallback = use_qrels;
  for (const auto& [qid, entries] : run) {
    const std::size_t top = std::min(k, entries.size());
    double hit = 0.0;
    if (use_qrels) {
      const auto rel = relevant_docs(*fallback, qid);
      if (rel.empty()) {
        ++r.excluded;
        continue;
      }
      for (std::size_t i = 0; i < top && hit == 0.0; ++i) {
        if (std::binary_search(rel.begin(), rel.end(), entries[i].doc_id)) hit = 1.0;
      }
    } else {
      auto it = answers.find(qid);
      if (it == answers.end() || it->second.empty()) {
        ++r.excluded;
        continue;
      }
      for (std::size_t i = 0; i < top && hit == 0.0; ++i) {
        if (!corpus.contains(entries[i].doc_id)) continue;
        const std::string text = corpus[entries[i].doc_id].full_text();
        for (const auto& a : it->second) {
          if (contains_span(text, a)) {
            hit = 1.0;
            break;
          }
        }
      }
    }
    r.per_query[qid] = hit;
  }
  finish(r);
  return r;
}

}  // namespace qpeft
