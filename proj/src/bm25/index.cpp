#include "qpeft/bm25/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "qpeft/error.hpp"

namespace qpeft {

namespace {

bool indexable(TokenId t) { return t >= kNumReserved; }

double term_weight(double idf, double tf, double dl, double avgdl, const Bm25Params& p) {
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * dl / avgdl));
}

double mean_length(const std::vector<std::uint32_t>& lengths) {
  double total = 0.0;
  for (auto l : lengths) total += l;
  return total / static_cast<double>(lengths.size());
}

}  // namespace

InvertedIndex InvertedIndex::build(const Corpus& corpus) {
  if (corpus.empty()) throw ContractError("build_index: empty corpus");
  InvertedIndex idx;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus.at(d);
    idx.doc_ids_.push_back(doc.doc_id);
    idx.doc_lengths_.push_back(static_cast<std::uint32_t>(doc.token_ids.size()));
    std::map<TokenId, std::uint32_t> counts;
    for (TokenId t : doc.token_ids) {
      if (indexable(t)) ++counts[t];
    }
    for (const auto& [t, c] : counts) {
      if (static_cast<std::size_t>(t) >= idx.postings_.size()) idx.postings_.resize(static_cast<std::size_t>(t) + 1);
      idx.postings_[static_cast<std::size_t>(t)].push_back({static_cast<std::uint32_t>(d), c});
    }
  }
  idx.avgdl_ = mean_length(idx.doc_lengths_);
  if (!(idx.avgdl_ > 0.0)) throw ContractError("build_index: corpus has no tokens");
  return idx;
}

std::span<const Posting> InvertedIndex::postings(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= postings_.size()) return {};
  return postings_[static_cast<std::size_t>(t)];
}

std::uint32_t InvertedIndex::tf(TokenId t, std::size_t doc) const {
  const auto p = postings(t);
  auto it = std::lower_bound(p.begin(), p.end(), doc,
                             [](const Posting& x, std::size_t d) { return x.doc < d; });
  return it != p.end() && it->doc == doc ? it->tf : 0;
}

double InvertedIndex::idf(TokenId t) const {
  const double n = static_cast<double>(num_docs());
  const double df_t = static_cast<double>(df(t));
  return std::log(1.0 + (n - df_t + 0.5) / (df_t + 0.5));
}

void InvertedIndex::save(const std::string& path) const {
  nlohmann::json j;
  j["doc_ids"] = doc_ids_;
  j["doc_lengths"] = doc_lengths_;
  nlohmann::json post = nlohmann::json::array();
  for (std::size_t t = 0; t < postings_.size(); ++t) {
    if (postings_[t].empty()) continue;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : postings_[t]) list.push_back({p.doc, p.tf});
    post.push_back({{"token", t}, {"postings", list}});
  }
  j["terms"] = post;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << j.dump() << '\n';
}

InvertedIndex InvertedIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  InvertedIndex idx;
  try {
    const auto j = nlohmann::json::parse(in);
    idx.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
    idx.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
    for (const auto& term : j.at("terms")) {
      const auto t = term.at("token").get<std::size_t>();
      if (t >= idx.postings_.size()) idx.postings_.resize(t + 1);
      for (const auto& p : term.at("postings")) {
        idx.postings_[t].push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (idx.doc_ids_.empty() || idx.doc_ids_.size() != idx.doc_lengths_.size()) {
    throw ParseError(path + ": inconsistent index");
  }
  idx.avgdl_ = mean_length(idx.doc_lengths_);
  return idx;
}

double bm25_score(std::span<const TokenId> query_ids, std::size_t doc, const InvertedIndex& index,
                  const Bm25Params& params) {
  double score = 0.0;
  const double dl = index.doc_length(doc);
  for (TokenId t : query_ids) {
    if (!indexable(t)) continue;
    const auto tf = index.tf(t, doc);
    if (tf == 0) continue;
    score += term_weight(index.idf(t), tf, dl, index.avgdl(), params);
  }
  return score;
}

std::vector<RunEntry> search(std::span<const TokenId> query_ids, const InvertedIndex& index,
                             std::size_t k, const Bm25Params& params) {
  if (k < 1) throw ContractError("search: K must be >= 1");
  std::map<std::uint32_t, double> acc;
  for (TokenId t : query_ids) {
    if (!indexable(t)) continue;
    const double idf = index.idf(t);
    for (const auto& p : index.postings(t)) {
      acc[p.doc] += term_weight(idf, p.tf, index.doc_length(p.doc), index.avgdl(), params);
    }
  }
  std::vector<RunEntry> hits;
  hits.reserve(acc.size());
  for (const auto& [doc, s] : acc) hits.push_back({index.doc_id(doc), s});
  sort_entries(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

ScoredRun retrieve(const std::vector<Query>& queries, const InvertedIndex& index, std::size_t k,
                   const Bm25Params& params) {
  ScoredRun run;
  for (const auto& q : queries) run[q.query_id] = search(q.token_ids, index, k, params);
  return run;
}

}  // namespace qpeft
