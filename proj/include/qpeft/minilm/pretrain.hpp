#pragma once

#include <cstdint>
#include <vector>

#include "qpeft/minilm/minilm.hpp"

namespace qpeft {

struct PretrainConfig {
  int steps = 2000;
  int batch = 8;  // sequences per Adam step
  double lr = 5e-3;
  std::uint64_t seed = 0;
};

/// Next-token cross-entropy training on `sequences` (each scored as
/// [BOS] + tokens, truncated to max_seq_len), then freeze(). Returns the
/// frozen model; `step_losses`, when given, receives the mean token NLL of
/// each step.
template <typename Scalar>
MiniLM<Scalar> pretrain_lm(const std::vector<TokenSeq>& sequences, const LMConfig& config,
                           const PretrainConfig& pretrain, std::vector<double>* step_losses = nullptr);

/// exp(mean negative log-likelihood per token) of the model on `sequences`.
template <typename Scalar>
double perplexity(const MiniLM<Scalar>& lm, const std::vector<TokenSeq>& sequences);

/// Perplexity of the maximum-likelihood unigram model fitted on `sequences`
/// and evaluated on the same sequences.
double unigram_perplexity(const std::vector<TokenSeq>& sequences);

}  // namespace qpeft
