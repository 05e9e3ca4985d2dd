#pragma once

#include <map>
#include <string>
#include <vector>

namespace qpeft {

struct RunEntry {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const RunEntry&) const = default;
};

/// Per query, candidates z_1..z_K ordered by descending score, ties by
/// ascending doc_id.
using ScoredRun = std::map<std::string, std::vector<RunEntry>>;

/// Sorts in place by (score desc, doc_id asc).
void sort_entries(std::vector<RunEntry>& entries);

/// `query_id Q0 doc_id rank score tag`, space separated, ranks from 1,
/// score with 6 decimals.
void save_run(const std::string& path, const ScoredRun& run, const std::string& tag);

/// Parses a run file and re-sorts each query's list. Malformed lines and
/// duplicate (query, doc) pairs raise ParseError with the line number.
ScoredRun load_run(const std::string& path);

/// Keeps at most `depth` entries per query.
ScoredRun truncate_run(const ScoredRun& run, std::size_t depth);

}  // namespace qpeft
