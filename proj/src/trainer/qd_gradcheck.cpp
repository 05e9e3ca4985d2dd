#include "qpeft/trainer/qd_gradcheck.hpp"

namespace qpeft {

GradCheckReport check_qd_gradients(const MiniLM<double>& lm, QDModule<double>& qd, const TokenSeq& prompt_ids,
                                   const Corpus& corpus, std::span<const Instance> batch,
                                   std::span<const Triple> triples, std::size_t sample, std::uint64_t seed,
                                   double eps) {
  QueryLikelihoodScorer<double> scorer(lm, &qd, prompt_ids);
  SelectionMap pinned;
  const auto params = qd.parameters();
  const LossFn loss = [&](bool with_grad) {
    if (!with_grad) return batch_loss<double>(scorer, corpus, batch, triples, nullptr, &pinned).loss;
    GradSet<double> g = zeros_like(params);
    const double value = batch_loss<double>(scorer, corpus, batch, triples, &g, &pinned).loss;
    accumulate(params, g);
    return value;
  };
  return finite_diff_check(params, loss, eps, sample, seed);
}

}  // namespace qpeft
