#include "qpeft/bm25/run_file.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "qpeft/error.hpp"

namespace qpeft {

void sort_entries(std::vector<RunEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
}

void save_run(const std::string& path, const ScoredRun& run, const std::string& tag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  char buf[64];
  for (const auto& [qid, entries] : run) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6f", entries[i].score);
      out << qid << " Q0 " << entries[i].doc_id << ' ' << (i + 1) << ' ' << buf << ' ' << tag << '\n';
    }
  }
}

ScoredRun load_run(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  ScoredRun run;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string qid, q0, did, rank, score, tag, extra;
    if (!(ls >> qid >> q0 >> did >> rank >> score >> tag) || (ls >> extra)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'query_id Q0 doc_id rank score tag'");
    }
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(score, &used);
      if (used != score.size() || !std::isfinite(value)) throw std::invalid_argument(score);
      (void)std::stol(rank);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad rank or score");
    }
    if (!seen.emplace(qid, did).second) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate (" + qid + ", " + did + ")");
    }
    run[qid].push_back({did, value});
  }
  for (auto& [qid, entries] : run) sort_entries(entries);
  return run;
}

ScoredRun truncate_run(const ScoredRun& run, std::size_t depth) {
  ScoredRun out;
  for (const auto& [qid, entries] : run) {
    out[qid].assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(std::min(depth, entries.size())));
  }
  return out;
}

}  // namespace qpeft
