#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qpeft/bm25/run_file.hpp"
#include "qpeft/evalrank/scoring.hpp"
#include "qpeft/textdata/collections.hpp"

namespace qpeft {

struct TrainConfig {
  int batch_size = 4;
  int max_epochs = 20;
  int patience = 5;
  double lr = 3e-2;
  std::size_t train_size = 0;  // X; 0 uses the whole training split
  std::size_t eval_size = 0;   // Y; 0 uses the whole eval split
  std::uint64_t seed = 0;
  std::string prompt = "p4";
  QDConfig qd;
  std::size_t rerank_depth = 20;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochLog {
  int epoch = 0;
  std::optional<double> train_loss;  // none for epoch 0 (before any update)
  double eval_r10 = 0.0;
  double best_so_far = 0.0;

  bool operator==(const EpochLog&) const = default;
};

template <typename Scalar>
struct FitResult {
  QDModule<Scalar> best;
  QDModule<Scalar> last;
  int best_epoch = 0;
  std::vector<EpochLog> log;
  /// Sum over steps of |grad| per QD tensor, aligned with parameters().
  std::vector<double> grad_mass;
};

/// Seeded subset of `n` instances (all of them when n is 0 or n == size).
/// Throws ContractError when n exceeds the split.
std::vector<Instance> sample_instances(const Dataset& data, std::size_t n, std::uint64_t seed, const char* label);

/// Instances for `queries` (in order): the positive is the first judged-relevant
/// document, the negatives are the top `depth` candidates that are not judged
/// relevant. Queries without a relevant document or without a negative are
/// skipped and counted in `skipped`.
Dataset make_dataset(const std::vector<Query>& queries, const Corpus& corpus, const Qrels& qrels,
                     const ScoredRun& candidates, std::size_t depth, Split split, std::size_t* skipped = nullptr);

/// Replaces every instance's negative pool with its retriever candidates
/// (top `depth`) minus the positive and any judged-relevant document.
/// Instances left without a negative keep their original pool.
void candidate_negatives(Dataset& data, const ScoredRun& candidates, const Corpus& corpus, const Qrels& qrels,
                         std::size_t depth);

/// Mean Recall@10 after reranking `candidates` of the instances' queries.
template <typename Scalar>
double eval_recall10(const QueryLikelihoodScorer<Scalar>& scorer, const Corpus& corpus,
                     const std::vector<Instance>& queries, const ScoredRun& candidates, const Qrels& qrels,
                     std::size_t depth);

/// Trains a fresh QD module against the frozen LM. Epoch 0 evaluates the
/// initialization; each later epoch runs seeded shuffled batches with Adam
/// on theta, then evaluates. Stops after max_epochs or `patience` epochs
/// without a strict improvement. Throws NumericError on a non-finite loss.
template <typename Scalar>
FitResult<Scalar> fit(const MiniLM<Scalar>& lm, const Corpus& corpus, const Dataset& train, const Dataset& eval,
                      const ScoredRun& eval_candidates, const Qrels& qrels, const TokenSeq& prompt_ids,
                      const TrainConfig& config);

std::string training_log_csv(const std::vector<EpochLog>& log);
std::vector<EpochLog> parse_training_log_csv(const std::string& csv);

extern template FitResult<double> fit(const MiniLM<double>&, const Corpus&, const Dataset&, const Dataset&,
                                      const ScoredRun&, const Qrels&, const TokenSeq&, const TrainConfig&);
extern template FitResult<float> fit(const MiniLM<float>&, const Corpus&, const Dataset&, const Dataset&,
                                     const ScoredRun&, const Qrels&, const TokenSeq&, const TrainConfig&);

}  // namespace qpeft
