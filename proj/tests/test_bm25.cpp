#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "qpeft/bm25/index.hpp"
#include "qpeft/bm25/run_file.hpp"
#include "qpeft/numcore/rng.hpp"
#include "qpeft/textdata/synthetic.hpp"

using namespace qpeft;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "qpeft_test_bm25";
  fs::create_directories(dir);
  return dir / name;
}

struct Toy {
  Vocab vocab;
  Corpus corpus;
};

Toy toy_corpus(const std::vector<std::string>& texts) {
  Toy t;
  t.vocab = build_vocab(texts, 1000);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    t.corpus.add(Document{"d" + std::to_string(i + 1), "", texts[i], tokenize(" " + texts[i], t.vocab)});
  }
  return t;
}

// Direct formula over token counts.
double formula(const Corpus& c, const TokenSeq& q, std::size_t doc, double k1 = 1.2, double b = 0.75) {
  const double n = static_cast<double>(c.size());
  double total_len = 0.0;
  for (const auto& d : c.docs()) total_len += static_cast<double>(d.token_ids.size());
  const double avgdl = total_len / n;
  double s = 0.0;
  for (TokenId t : q) {
    double df = 0.0;
    for (const auto& d : c.docs()) df += std::count(d.token_ids.begin(), d.token_ids.end(), t) > 0 ? 1.0 : 0.0;
    const auto& ids = c.at(doc).token_ids;
    const double tf = static_cast<double>(std::count(ids.begin(), ids.end(), t));
    if (tf == 0.0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(ids.size()) / avgdl));
  }
  return s;
}

}  // namespace

TEST_CASE("build_index") {
  const Toy one = toy_corpus({"x y z y"});
  const auto idx = InvertedIndex::build(one.corpus);
  for (const char* w : {"x", "y", "z"}) CHECK(idx.df(one.vocab.id(w)) == 1);
  CHECK(idx.tf(one.vocab.id("y"), 0) == 2);
  CHECK(idx.postings(kUnk).empty());
  CHECK(idx.postings(9999).empty());
  CHECK(idx.doc_length(0) == one.corpus.at(0).token_ids.size());
  CHECK_THROWS_AS(InvertedIndex::build(Corpus{}), ContractError);
}

TEST_CASE("bm25_score") {
  const Toy one = toy_corpus({"w"});
  const auto idx = InvertedIndex::build(one.corpus);
  const TokenSeq q{one.vocab.id("w")};
  CHECK(std::abs(idx.idf(q[0]) - 0.28768207245178085) < 1e-12);
  CHECK(std::abs(bm25_score(q, 0, idx) - std::log(4.0 / 3.0)) < 1e-12);
  const TokenSeq absent{kUnk};
  CHECK(bm25_score(absent, 0, idx) == 0.0);

  const Toy toy = toy_corpus({"a b a c", "b c c", "a d e f a b"});
  const auto tidx = InvertedIndex::build(toy.corpus);
  const TokenSeq ac{toy.vocab.id("a"), toy.vocab.id("c")};
  const double ref[] = {1.145820146388326, 0.7074791471804232, 0.5831715312983966};
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(std::abs(bm25_score(ac, d, tidx) - ref[d]) < 1e-9);
    CHECK(std::abs(bm25_score(ac, d, tidx) - formula(toy.corpus, ac, d)) < 1e-12);
  }
  const TokenSeq aac{toy.vocab.id("a"), toy.vocab.id("a"), toy.vocab.id("c")};
  CHECK(bm25_score(aac, 0, tidx) > bm25_score(ac, 0, tidx));
}

TEST_CASE("search") {
  const Toy toy = toy_corpus({"a b a c", "b c c", "a d e f a b", "g h"});
  const auto idx = InvertedIndex::build(toy.corpus);
  const TokenSeq ac{toy.vocab.id("a"), toy.vocab.id("c")};
  const auto top = search(ac, idx, 10);
  REQUIRE(top.size() == 3);
  CHECK(top[0].doc_id == "d1");
  CHECK(top[1].doc_id == "d2");
  CHECK(top[2].doc_id == "d3");
  CHECK(search(ac, idx, 1).size() == 1);
  CHECK(search(TokenSeq{kUnk}, idx, 5).empty());
  CHECK_THROWS_AS(search(ac, idx, 0), ContractError);

  const Toy tie = toy_corpus({"p q", "q p", "p q"});
  const auto tied = search(TokenSeq{tie.vocab.id("p")}, InvertedIndex::build(tie.corpus), 3);
  CHECK(tied[0].doc_id == "d1");
  CHECK(tied[1].doc_id == "d2");
  CHECK(tied[2].doc_id == "d3");
}

TEST_CASE("search equals brute force over term-sharing documents") {
  SyntheticConfig sc;
  sc.num_docs = 120;
  sc.num_queries = 60;
  sc.vocab_size = 100;
  const auto data = make_synthetic_dataset(sc);
  const auto idx = InvertedIndex::build(data.corpus);
  for (const auto& q : data.queries) {
    std::vector<RunEntry> brute;
    for (std::size_t d = 0; d < data.corpus.size(); ++d) {
      const auto& ids = data.corpus.at(d).token_ids;
      const bool shares = std::any_of(q.token_ids.begin(), q.token_ids.end(), [&](TokenId t) {
        return t >= kNumReserved && std::find(ids.begin(), ids.end(), t) != ids.end();
      });
      if (shares) brute.push_back({data.corpus.at(d).doc_id, formula(data.corpus, q.token_ids, d)});
    }
    sort_entries(brute);
    const auto got = search(q.token_ids, idx, data.corpus.size());
    REQUIRE(got.size() == brute.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].doc_id == brute[i].doc_id);
      CHECK(std::abs(got[i].score - brute[i].score) < 1e-9);
      CHECK(got[i].score >= 0.0);
    }
  }
}

TEST_CASE("adding an unrelated document changes scores only through global statistics") {
  const Toy before = toy_corpus({"a b a c", "b c c", "a d e f a b"});
  const Toy after = toy_corpus({"a b a c", "b c c", "a d e f a b", "x y z w v"});
  const TokenSeq q{after.vocab.id("a"), after.vocab.id("c")};
  const auto idx = InvertedIndex::build(after.corpus);
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(std::abs(bm25_score(q, d, idx) - formula(after.corpus, q, d)) < 1e-12);
  }
  CHECK(bm25_score(q, 3, idx) == 0.0);
  (void)before;
}

TEST_CASE("index save and load round trip") {
  const Toy toy = toy_corpus({"a b a c", "b c c"});
  const auto idx = InvertedIndex::build(toy.corpus);
  idx.save(scratch("index.json").string());
  CHECK(InvertedIndex::load(scratch("index.json").string()) == idx);
  std::ofstream(scratch("bad.json")) << "{\"nope\": 1}";
  CHECK_THROWS_AS(InvertedIndex::load(scratch("bad.json").string()), ParseError);
}

TEST_CASE("run files") {
  const auto path = scratch("run.txt");
  SUBCASE("format") {
    std::ofstream(path) << "q1 Q0 d9 1 12.5 tag\n";
    const auto run = load_run(path.string());
    REQUIRE(run.at("q1").size() == 1);
    CHECK(run.at("q1")[0] == RunEntry{"d9", 12.5});
  }
  SUBCASE("re-sorted by score then doc id") {
    std::ofstream(path) << "q1 Q0 d1 1 1.0 t\nq1 Q0 d3 2 5.0 t\nq1 Q0 d2 3 5.0 t\n";
    const auto run = load_run(path.string());
    CHECK(run.at("q1") == std::vector<RunEntry>{{"d2", 5.0}, {"d3", 5.0}, {"d1", 1.0}});
  }
  SUBCASE("duplicates and malformed lines carry the line number") {
    std::ofstream(path) << "q1 Q0 d1 1 1.0 t\nq1 Q0 d1 2 0.5 t\n";
    try {
      load_run(path.string());
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    std::ofstream(path) << "q1 Q0 d1 x 1.0 t\n";
    CHECK_THROWS_AS(load_run(path.string()), ParseError);
    std::ofstream(path) << "q1 Q0 d1 1\n";
    CHECK_THROWS_AS(load_run(path.string()), ParseError);
  }
  SUBCASE("save writes six decimals and ranks from one") {
    ScoredRun run{{"q7", {{"dA", 3.25}, {"dB", 1.0}}}};
    save_run(path.string(), run, "bm25");
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "q7 Q0 dA 1 3.250000 bm25");
    CHECK(load_run(path.string()) == run);
  }
  CHECK(truncate_run(ScoredRun{{"q", {{"a", 3}, {"b", 2}, {"c", 1}}}}, 2).at("q").size() == 2);
}
