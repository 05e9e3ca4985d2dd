#include "qpeft/textdata/collections.hpp"

#include <fstream>
#include <sstream>

#include "qpeft/error.hpp"

namespace qpeft {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

[[noreturn]] void malformed(const std::string& path, int lineno, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Eval: return "eval";
    case Split::Test: return "test";
  }
  return "?";
}

void Corpus::add(Document doc) {
  if (index_.count(doc.doc_id)) throw ContractError("duplicate doc_id " + doc.doc_id);
  index_.emplace(doc.doc_id, docs_.size());
  docs_.push_back(std::move(doc));
}

std::size_t Corpus::index_of(const std::string& doc_id) const {
  auto it = index_.find(doc_id);
  if (it == index_.end()) throw ContractError("unknown doc_id " + doc_id);
  return it->second;
}

void Corpus::retokenize(const Vocab& vocab) {
  for (auto& d : docs_) d.token_ids = tokenize(d.full_text(), vocab);
}

void retokenize(std::vector<Query>& queries, const Vocab& vocab) {
  for (auto& q : queries) q.token_ids = tokenize(q.text, vocab);
}

Corpus load_corpus(const std::string& path, const Vocab* vocab) {
  auto in = open_in(path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = split_tabs(line);
    if (f.size() != 3 || f[0].empty()) malformed(path, lineno, "expected doc_id<TAB>title<TAB>text");
    if (corpus.contains(f[0])) malformed(path, lineno, "duplicate doc_id " + f[0]);
    Document d{f[0], f[1], f[2], {}};
    if (vocab) d.token_ids = tokenize(d.full_text(), *vocab);
    corpus.add(std::move(d));
  }
  return corpus;
}

std::vector<Query> load_queries(const std::string& path, const Vocab* vocab) {
  auto in = open_in(path);
  std::vector<Query> queries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = split_tabs(line);
    if (f.size() != 2 || f[0].empty()) malformed(path, lineno, "expected query_id<TAB>text");
    Query q{f[0], f[1], {}};
    if (vocab) q.token_ids = tokenize(q.text, *vocab);
    queries.push_back(std::move(q));
  }
  return queries;
}

Qrels load_qrels(const std::string& path, const Corpus* corpus) {
  auto in = open_in(path);
  Qrels qrels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = split_tabs(line);
    if (f.size() != 3 || f[0].empty() || f[1].empty()) {
      malformed(path, lineno, "expected query_id<TAB>doc_id<TAB>label");
    }
    if (f[2] != "0" && f[2] != "1") malformed(path, lineno, "label must be 0 or 1");
    if (corpus && !corpus->contains(f[1])) malformed(path, lineno, "unknown doc_id " + f[1]);
    qrels[f[0]][f[1]] = f[2] == "1" ? 1 : 0;
  }
  return qrels;
}

Answers load_answers(const std::string& path) {
  auto in = open_in(path);
  Answers answers;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = split_tabs(line);
    if (f.size() != 2 || f[0].empty()) malformed(path, lineno, "expected query_id<TAB>answers");
    std::vector<std::string> list;
    std::size_t start = 0;
    while (true) {
      const auto pos = f[1].find("||", start);
      list.push_back(f[1].substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 2;
    }
    answers[f[0]] = std::move(list);
  }
  return answers;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  auto out = open_out(path);
  for (const auto& d : corpus.docs()) out << d.doc_id << '\t' << d.title << '\t' << d.text << '\n';
}

void save_queries(const std::string& path, const std::vector<Query>& queries) {
  auto out = open_out(path);
  for (const auto& q : queries) out << q.query_id << '\t' << q.text << '\n';
}

void save_qrels(const std::string& path, const Qrels& qrels) {
  auto out = open_out(path);
  for (const auto& [qid, docs] : qrels) {
    for (const auto& [did, label] : docs) out << qid << '\t' << did << '\t' << label << '\n';
  }
}

void save_answers(const std::string& path, const Answers& answers) {
  auto out = open_out(path);
  for (const auto& [qid, list] : answers) {
    out << qid << '\t';
    for (std::size_t i = 0; i < list.size(); ++i) out << (i ? "||" : "") << list[i];
    out << '\n';
  }
}

std::vector<std::string> relevant_docs(const Qrels& qrels, const std::string& query_id) {
  std::vector<std::string> rel;
  auto it = qrels.find(query_id);
  if (it == qrels.end()) return rel;
  for (const auto& [did, label] : it->second) {
    if (label > 0) rel.push_back(did);
  }
  return rel;
}

}  // namespace qpeft
