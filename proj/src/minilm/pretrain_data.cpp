#include "qpeft/minilm/pretrain_data.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "qpeft/error.hpp"
#include "qpeft/numcore/rng.hpp"

namespace qpeft {

std::vector<TokenSeq> pretraining_sequences(const Corpus& corpus, std::span<const TokenSeq> prompts,
                                            std::span<const TokenId> lead_tokens, const PretrainMix& mix) {
  if (corpus.empty()) throw ContractError("pretraining_sequences: empty corpus");
  if (prompts.empty() || lead_tokens.empty()) throw ContractError("pretraining_sequences: no prompts or lead tokens");
  if (mix.fresh_per_doc < 0 || mix.min_query_terms < 1 || mix.max_query_terms < mix.min_query_terms) {
    throw ContractError("pretraining_sequences: bad mix");
  }

  std::vector<TokenSeq> out;
  std::map<TokenId, double> df;
  TokenSeq pool;
  for (const auto& d : corpus.docs()) {
    out.push_back(d.token_ids);
    for (TokenId t : std::set<TokenId>(d.token_ids.begin(), d.token_ids.end())) df[t] += 1.0;
    pool.insert(pool.end(), d.token_ids.begin(), d.token_ids.end());
  }
  if (pool.empty()) throw ContractError("pretraining_sequences: corpus has no tokens");

  Rng rng(derive_seed(mix.seed, "pretrain-mix"));
  const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.uniform_int(n)); };
  const int span = mix.max_query_terms - mix.min_query_terms + 1;
  for (int rep = 0; rep < mix.fresh_per_doc; ++rep) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const std::size_t len = std::max<std::size_t>(1, corpus.at(pick(corpus.size())).token_ids.size());
      TokenSeq doc(len);
      for (auto& t : doc) t = pool[pick(pool.size())];

      std::vector<double> cum(len);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) cum[j] = total += 1.0 / df[doc[j]];
      const auto draw_rare = [&] {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cum.begin(), cum.end(), u);
        return doc[std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), len - 1)];
      };

      TokenSeq block(2 + pick(4));
      for (auto& t : block) t = draw_rare();
      TokenSeq query(static_cast<std::size_t>(mix.min_query_terms + static_cast<int>(pick(span))));
      for (auto& t : query) t = rng.bernoulli(mix.block_copy_rate) ? block[pick(block.size())] : draw_rare();

      TokenSeq seq = doc;
      seq.insert(seq.end(), block.begin(), block.end());
      const auto& prompt = prompts[pick(prompts.size())];
      seq.insert(seq.end(), prompt.begin(), prompt.end());
      seq.push_back(lead_tokens[pick(lead_tokens.size())]);
      seq.insert(seq.end(), query.begin(), query.end());
      out.push_back(std::move(seq));
    }
  }
  return out;
}

}  // namespace qpeft
