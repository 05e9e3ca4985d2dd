#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qpeft/numcore/ops.hpp"
#include "qpeft/numcore/param.hpp"
#include "qpeft/textdata/vocab.hpp"

namespace qpeft {

/// R: cosine retrieval of top-k document tokens. A: multi-head cross-attention.
enum class Variant { R, A };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);  // "r" | "a" (case-insensitive)

struct QDConfig {
  Variant variant = Variant::A;
  int k = 10;           // R only
  int heads = 2;        // A only
  int mlp_layers = 1;   // 0, 1 or 2
  int model_dim = 32;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const QDConfig&) const = default;
};

/// Cosine between each f_embed query row and each frozen-table document row
/// (|q| x |doc|). Zero-norm rows give cosine 0.
template <typename Scalar>
Matrix<Scalar> cosine_matrix(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                             const Matrix<Scalar>& f_embed, const Matrix<Scalar>& llm_embed);

/// Distinct document token ids ranked by their best cosine over every
/// (query row, occurrence column) pair; ties by ascending id; at most k.
template <typename Scalar>
TokenSeq topk_unique(const Matrix<Scalar>& cos, std::span<const TokenId> doc_ids, int k);

/// Affine layer d -> d.
template <typename Scalar>
struct MlpLayer {
  ParamTensor<Scalar> weight;
  ParamTensor<Scalar> bias;
};

/// Forward values kept for backprop through the MLP.
template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> inputs;  // input to each layer
  std::vector<Matrix<Scalar>> pre;     // affine output of each layer
};

/// Shape-preserving MLP: affine layers with tanh between them and no
/// nonlinearity after the last. Zero layers is the identity.
template <typename Scalar>
Matrix<Scalar> mlp_apply(const Matrix<Scalar>& x, const std::vector<MlpLayer<Scalar>>& layers,
                         MlpCache<Scalar>* cache = nullptr);

/// Trainable query-dependent module producing the hint matrix.
/// Parameters (in order): f_embed, then W_Q, W_K, W_V, W_O for variant A,
/// then the MLP layers.
template <typename Scalar>
class QDModule {
public:
  using Mat = Matrix<Scalar>;

  /// f_embed starts as a bitwise copy of the frozen token table.
  QDModule(const QDConfig& config, const Mat& llm_embed);

  struct Cache {
    TokenSeq query;
    TokenSeq selected;  // R
    Mat x_query;        // A: f_embed rows of the query
    Mat x_doc;          // A: frozen rows of the document
    Mat q, k, v;
    std::vector<Mat> probs;
    Mat concat;
    MlpCache<Scalar> mlp;
  };

  /// Hint rows for (query, doc): k' x d for R, |q| x d for A.
  /// `fixed_selection` overrides the R selection (used to hold it constant).
  Mat hint(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
           const Mat& llm_embed, Cache* cache = nullptr,
           const TokenSeq* fixed_selection = nullptr) const;

  /// Adds d(loss)/d(theta) for the cached hint into `grads` (aligned with parameters()).
  void backward(const Cache& cache, const Mat& d_hint, GradSet<Scalar>& grads) const;

  const QDConfig& config() const { return config_; }
  std::vector<ParamTensor<Scalar>*> parameters();
  std::vector<const ParamTensor<Scalar>*> parameters() const;

  ParamTensor<Scalar>& f_embed() { return f_embed_; }
  const ParamTensor<Scalar>& f_embed() const { return f_embed_; }
  ParamTensor<Scalar>& w_q() { return w_q_; }
  ParamTensor<Scalar>& w_k() { return w_k_; }
  ParamTensor<Scalar>& w_v() { return w_v_; }
  ParamTensor<Scalar>& w_o() { return w_o_; }
  std::vector<MlpLayer<Scalar>>& mlp() { return mlp_; }

private:
  Mat attention_hint(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                     const Mat& llm_embed, Cache* cache) const;

  QDConfig config_;
  ParamTensor<Scalar> f_embed_;
  ParamTensor<Scalar> w_q_, w_k_, w_v_, w_o_;
  std::vector<MlpLayer<Scalar>> mlp_;
};

extern template class QDModule<double>;
extern template class QDModule<float>;

}  // namespace qpeft
