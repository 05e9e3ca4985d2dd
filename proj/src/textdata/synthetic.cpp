#include "qpeft/textdata/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_set>

#include "qpeft/error.hpp"
#include "qpeft/numcore/rng.hpp"

namespace qpeft {

namespace {

const std::vector<std::string> kQuestionWords = {"what", "who", "where", "when", "which", "how"};

std::string make_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%04d", prefix, i);
  return buf;
}

/// Pronounceable consonant-vowel words, unique, never colliding with `avoid`.
std::vector<std::string> make_words(Rng& rng, int count, const std::unordered_set<std::string>& avoid) {
  static const char kCons[] = "bdfgklmnprstvz";
  static const char kVow[] = "aeiou";
  std::vector<std::string> words;
  std::unordered_set<std::string> seen(avoid);
  while (static_cast<int>(words.size()) < count) {
    const int syllables = 2 + static_cast<int>(rng.uniform_int(2));
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w.push_back(kCons[rng.uniform_int(sizeof kCons - 1)]);
      w.push_back(kVow[rng.uniform_int(sizeof kVow - 1)]);
    }
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

/// Index drawn with weights 1/(rank+1).
std::size_t zipf_draw(Rng& rng, std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += 1.0 / static_cast<double>(i + 1);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    u -= 1.0 / static_cast<double>(i + 1);
    if (u < 0.0) return i;
  }
  return n - 1;
}

std::string join(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
  std::string s;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) s.push_back(' ');
    s += words[i];
  }
  return s;
}

struct DocPlan {
  int topic = 0;
  std::vector<std::string> salient;
  std::vector<std::string> tokens;  // body words
};

}  // namespace

SyntheticData make_synthetic_dataset(const SyntheticConfig& c,
                                     const std::vector<std::string>& extra_vocab_texts) {
  if (c.vocab_size < 50) throw ContractError("synthetic: vocab_size must be >= 50");
  if (c.num_queries < 6) throw ContractError("synthetic: need at least 6 queries");
  if (c.num_docs < c.num_queries) throw ContractError("synthetic: num_docs must be >= num_queries");
  if (c.negatives_per_query < 1 || c.negatives_per_query >= c.num_docs) {
    throw ContractError("synthetic: negatives_per_query out of range");
  }
  if (c.num_topics < 1 || c.min_doc_len < 4 || c.max_doc_len < c.min_doc_len ||
      c.salient_per_query > c.salient_per_doc || c.salient_per_query < 1) {
    throw ContractError("synthetic: inconsistent generator configuration");
  }

  Rng rng(derive_seed(c.seed, "synthetic"));

  std::unordered_set<std::string> avoid(kQuestionWords.begin(), kQuestionWords.end());
  for (const auto& t : extra_vocab_texts) {
    for (auto& w : split_words(t)) avoid.insert(std::move(w));
  }
  const auto words = make_words(rng, c.vocab_size, avoid);

  const int n_common = std::max(3, c.vocab_size / 10);
  const int n_topic_total = c.vocab_size / 2;
  const int per_topic = n_topic_total / c.num_topics;
  if (per_topic < 2) throw ContractError("synthetic: too many topics for vocab_size");
  const int salient_begin = n_common + per_topic * c.num_topics;
  const int n_salient = c.vocab_size - salient_begin;
  if (n_salient < c.salient_per_doc) throw ContractError("synthetic: salient pool too small");

  auto topic_word = [&](int topic, std::size_t rank) {
    return words[static_cast<std::size_t>(n_common + topic * per_topic) + rank];
  };

  SyntheticData out;
  std::vector<DocPlan> plans(static_cast<std::size_t>(c.num_docs));
  for (int d = 0; d < c.num_docs; ++d) {
    auto& p = plans[static_cast<std::size_t>(d)];
    p.topic = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c.num_topics)));
    std::set<int> picked;
    while (static_cast<int>(picked.size()) < c.salient_per_doc) {
      picked.insert(salient_begin + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_salient))));
    }
    std::vector<int> order(picked.begin(), picked.end());
    rng.shuffle(order);
    for (int w : order) p.salient.push_back(words[static_cast<std::size_t>(w)]);

    const int len = c.min_doc_len +
                    static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c.max_doc_len - c.min_doc_len + 1)));
    for (int t = 0; t < len; ++t) {
      const double r = rng.uniform();
      if (r < c.common_rate) {
        p.tokens.push_back(words[rng.uniform_int(static_cast<std::uint64_t>(n_common))]);
      } else if (r < 1.0 - c.salient_rate) {
        p.tokens.push_back(topic_word(p.topic, zipf_draw(rng, static_cast<std::size_t>(per_topic))));
      } else {
        p.tokens.push_back(p.salient[rng.uniform_int(p.salient.size())]);
      }
    }
    // The answer span starts at the first salient word; guarantee it occurs in the body.
    if (std::find(p.tokens.begin(), p.tokens.end(), p.salient[0]) == p.tokens.end()) {
      p.tokens[rng.uniform_int(p.tokens.size())] = p.salient[0];
    }
    const std::string title = p.salient[0] + " " + topic_word(p.topic, 0);
    out.corpus.add(Document{make_id('d', d), title, join(p.tokens, 0, p.tokens.size()), {}});
  }

  // Each query gets a distinct positive document.
  std::vector<int> doc_order(static_cast<std::size_t>(c.num_docs));
  for (int d = 0; d < c.num_docs; ++d) doc_order[static_cast<std::size_t>(d)] = d;
  rng.shuffle(doc_order);

  const int n_small = c.num_queries / 6;
  const int n_train = c.num_queries - 2 * n_small;
  out.train.split = Split::Train;
  out.eval.split = Split::Eval;
  out.test.split = Split::Test;

  std::vector<std::vector<std::size_t>> same_topic(static_cast<std::size_t>(c.num_topics));
  for (int d = 0; d < c.num_docs; ++d) {
    same_topic[static_cast<std::size_t>(plans[static_cast<std::size_t>(d)].topic)].push_back(static_cast<std::size_t>(d));
  }

  for (int qi = 0; qi < c.num_queries; ++qi) {
    const auto pos = static_cast<std::size_t>(doc_order[static_cast<std::size_t>(qi)]);
    const auto& p = plans[pos];

    std::vector<std::string> content;
    std::vector<std::string> sal = p.salient;
    rng.shuffle(sal);
    for (int s = 0; s < c.salient_per_query; ++s) content.push_back(sal[static_cast<std::size_t>(s)]);
    std::vector<std::string> topical;
    for (const auto& w : p.tokens) {
      if (std::find(p.salient.begin(), p.salient.end(), w) == p.salient.end()) topical.push_back(w);
    }
    if (!topical.empty()) content.push_back(topical[rng.uniform_int(topical.size())]);
    if (rng.bernoulli(c.query_noise)) {
      content.push_back(words[rng.uniform_int(static_cast<std::uint64_t>(n_common))]);
    }
    rng.shuffle(content);
    std::vector<std::string> qwords{kQuestionWords[rng.uniform_int(kQuestionWords.size())]};
    qwords.insert(qwords.end(), content.begin(), content.end());

    const std::string qid = make_id('q', qi);
    out.queries.push_back(Query{qid, join(qwords, 0, qwords.size()), {}});
    out.qrels[qid][out.corpus.at(pos).doc_id] = 1;

    const auto first = static_cast<std::size_t>(
        std::find(p.tokens.begin(), p.tokens.end(), p.salient[0]) - p.tokens.begin());
    out.answers[qid] = {join(p.tokens, first, std::min(first + 2, p.tokens.size()))};

    // Half the negatives share the positive's topic when possible.
    Instance inst;
    inst.query_id = qid;
    inst.positive = pos;
    std::set<std::size_t> negs;
    const auto& pool = same_topic[static_cast<std::size_t>(p.topic)];
    const std::size_t want = static_cast<std::size_t>(c.negatives_per_query);
    int guard = 0;
    while (negs.size() < want / 2 && pool.size() > 1 && guard++ < 1000) {
      const auto d = pool[rng.uniform_int(pool.size())];
      if (d != pos) negs.insert(d);
    }
    while (negs.size() < want) {
      const auto d = static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(c.num_docs)));
      if (d != pos) negs.insert(d);
    }
    inst.negatives.assign(negs.begin(), negs.end());
    rng.shuffle(inst.negatives);

    Dataset& target = qi < n_train ? out.train : (qi < n_train + n_small ? out.eval : out.test);
    target.instances.push_back(std::move(inst));
  }

  std::vector<std::string> texts;
  for (const auto& d : out.corpus.docs()) texts.push_back(d.full_text());
  for (const auto& q : out.queries) texts.push_back(q.text);
  texts.insert(texts.end(), extra_vocab_texts.begin(), extra_vocab_texts.end());
  out.vocab = build_vocab(texts, 1 << 20);
  out.corpus.retokenize(out.vocab);
  retokenize(out.queries, out.vocab);
  for (Dataset* ds : {&out.train, &out.eval, &out.test}) {
    for (auto& inst : ds->instances) {
      const auto idx = static_cast<std::size_t>(std::stoi(inst.query_id.substr(1)));
      inst.query_ids = out.queries[idx].token_ids;
    }
  }
  return out;
}

}  // namespace qpeft
