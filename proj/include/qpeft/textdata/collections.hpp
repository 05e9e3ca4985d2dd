#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "qpeft/textdata/vocab.hpp"

namespace qpeft {

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
  TokenSeq token_ids;  // tokenize(title + " " + text)

  std::string full_text() const { return title + " " + text; }
};

/// Documents in file order with an id index.
class Corpus {
public:
  void add(Document doc);
  const Document& at(std::size_t index) const { return docs_.at(index); }
  const Document& operator[](const std::string& doc_id) const { return docs_[index_of(doc_id)]; }
  std::size_t index_of(const std::string& doc_id) const;  // throws if absent
  bool contains(const std::string& doc_id) const { return index_.count(doc_id) > 0; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::vector<Document>& docs() const { return docs_; }

  /// Recomputes every document's token_ids under `vocab`.
  void retokenize(const Vocab& vocab);

private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Query {
  std::string query_id;
  std::string text;
  TokenSeq token_ids;
};

/// query_id -> (doc_id -> label)
using Qrels = std::map<std::string, std::map<std::string, int>>;
/// query_id -> answer strings
using Answers = std::map<std::string, std::vector<std::string>>;

/// One training/eval example: a query, its positive and a negative pool.
/// Documents are referenced by corpus index.
struct Instance {
  std::string query_id;
  TokenSeq query_ids;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
};

enum class Split { Train, Eval, Test };

struct Dataset {
  Split split = Split::Train;
  std::vector<Instance> instances;
};

const char* split_name(Split s);

// File formats (UTF-8, LF, no header, tab separated):
//   corpus.tsv   doc_id  title  text
//   queries.tsv  query_id  text
//   qrels.tsv    query_id  doc_id  label(0|1)
//   answers.tsv  query_id  answer1||answer2||...
Corpus load_corpus(const std::string& path, const Vocab* vocab = nullptr);
std::vector<Query> load_queries(const std::string& path, const Vocab* vocab = nullptr);
/// Unknown doc ids raise ParseError when `corpus` is given.
Qrels load_qrels(const std::string& path, const Corpus* corpus = nullptr);
Answers load_answers(const std::string& path);

void save_corpus(const std::string& path, const Corpus& corpus);
void save_queries(const std::string& path, const std::vector<Query>& queries);
void save_qrels(const std::string& path, const Qrels& qrels);
void save_answers(const std::string& path, const Answers& answers);

void retokenize(std::vector<Query>& queries, const Vocab& vocab);

/// Relevant (label 1) doc ids for a query, ascending.
std::vector<std::string> relevant_docs(const Qrels& qrels, const std::string& query_id);

}  // namespace qpeft
