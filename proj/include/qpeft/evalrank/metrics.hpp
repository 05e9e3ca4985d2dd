#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "qpeft/bm25/run_file.hpp"
#include "qpeft/textdata/collections.hpp"

namespace qpeft {

struct MetricResult {
  std::map<std::string, double> per_query;
  double mean = 0.0;
  long excluded = 0;           // queries without judgments/answers
  bool qrels_fallback = false;  // Hit@k judged by qrels because no answers were given
};

/// |relevant ∩ top-k| / |relevant| per query, macro-averaged. Queries with
/// no relevant document are excluded and counted.
MetricResult recall_at_k(const ScoredRun& run, const Qrels& qrels, std::size_t k);

/// 1 iff some top-k document contains an answer as a case-insensitive,
/// token-boundary match. Falls back to qrels membership when `answers` is
/// empty and `fallback` is given.
MetricResult hit_at_k(const ScoredRun& run, const Answers& answers, const Corpus& corpus, std::size_t k,
                      const Qrels* fallback = nullptr);

/// True when the word sequence of `answer` occurs contiguously in `text`.
bool contains_span(const std::string& text, const std::string& answer);

}  // namespace qpeft
