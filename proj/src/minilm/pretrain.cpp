#include "qpeft/minilm/pretrain.hpp"

#include <cmath>
#include <map>

#include "qpeft/minilm/loglik.hpp"
#include "qpeft/numcore/rng.hpp"

namespace qpeft {

namespace {

TokenSeq clip(const TokenSeq& seq, int max_seq_len) {
  const std::size_t keep = std::min(seq.size(), static_cast<std::size_t>(max_seq_len - 1));
  return TokenSeq(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(keep));
}

}  // namespace

template <typename Scalar>
MiniLM<Scalar> pretrain_lm(const std::vector<TokenSeq>& sequences, const LMConfig& config,
                           const PretrainConfig& pc, std::vector<double>* step_losses) {
  if (pc.steps < 0) throw ContractError("pretrain_lm: steps must be >= 0");
  if (pc.batch < 1) throw ContractError("pretrain_lm: batch must be >= 1");
  MiniLM<Scalar> lm(config);
  std::vector<TokenSeq> usable;
  for (const auto& s : sequences) {
    if (!s.empty()) usable.push_back(clip(s, config.max_seq_len));
  }
  if (pc.steps > 0 && usable.empty()) throw ContractError("pretrain_lm: no non-empty sequences");

  auto params = lm.parameters();
  AdamHyper hyper;
  hyper.lr = pc.lr;
  std::vector<AdamState<Scalar>> states;
  for (auto* p : params) states.emplace_back(*p, hyper);

  Rng rng(derive_seed(pc.seed, "lm-pretrain"));
  const TokenId bos = kBos;
  for (int step = 0; step < pc.steps; ++step) {
    std::vector<const TokenSeq*> batch;
    std::size_t tokens = 0;
    for (int b = 0; b < pc.batch; ++b) {
      batch.push_back(&usable[rng.uniform_int(usable.size())]);
      tokens += batch.back()->size();
    }
    const Scalar coef = Scalar(-1) / static_cast<Scalar>(tokens);
    double loss = 0.0;
    for (const TokenSeq* seq : batch) {
      const Matrix<Scalar> prefix = lm.embed(std::span<const TokenId>(&bos, 1));
      auto g = continuation_loglik_train(lm, prefix, std::span<const TokenId>(*seq), coef);
      loss -= static_cast<double>(g.value);
      TokenSeq inputs{kBos};
      inputs.insert(inputs.end(), seq->begin(), seq->end() - 1);
      lm.scatter_embedding_grad(inputs, g.d_input);
    }
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(*params[i], states[i]);
    if (step_losses) step_losses->push_back(loss / static_cast<double>(tokens));
  }
  lm.freeze();
  return lm;
}

template <typename Scalar>
double perplexity(const MiniLM<Scalar>& lm, const std::vector<TokenSeq>& sequences) {
  double nll = 0.0;
  std::size_t n = 0;
  for (const auto& s : sequences) {
    if (s.empty()) continue;
    const TokenSeq seq = clip(s, lm.config().max_seq_len);
    nll -= static_cast<double>(continuation_loglik(lm, Matrix<Scalar>(0, lm.dim()), std::span<const TokenId>(seq)));
    n += seq.size();
  }
  if (n == 0) throw ContractError("perplexity: no tokens");
  return std::exp(nll / static_cast<double>(n));
}

double unigram_perplexity(const std::vector<TokenSeq>& sequences) {
  std::map<TokenId, double> counts;
  double n = 0.0;
  for (const auto& s : sequences) {
    for (TokenId t : s) {
      counts[t] += 1.0;
      n += 1.0;
    }
  }
  if (n == 0.0) throw ContractError("unigram_perplexity: no tokens");
  double nll = 0.0;
  for (const auto& [t, c] : counts) nll -= c * std::log(c / n);
  return std::exp(nll / n);
}

template MiniLM<double> pretrain_lm(const std::vector<TokenSeq>&, const LMConfig&, const PretrainConfig&, std::vector<double>*);
template MiniLM<float> pretrain_lm(const std::vector<TokenSeq>&, const LMConfig&, const PretrainConfig&, std::vector<double>*);
template double perplexity(const MiniLM<double>&, const std::vector<TokenSeq>&);
template double perplexity(const MiniLM<float>&, const std::vector<TokenSeq>&);

}  // namespace qpeft
