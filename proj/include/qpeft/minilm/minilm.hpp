#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qpeft/numcore/ops.hpp"
#include "qpeft/numcore/param.hpp"
#include "qpeft/textdata/vocab.hpp"

namespace qpeft {

struct LMConfig {
  int vocab_size = 0;
  int model_dim = 32;
  int layers = 2;
  int heads = 2;
  int ffn_dim = 128;
  int max_seq_len = 256;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const LMConfig&) const = default;
};

/// Weights of one pre-norm transformer block.
template <typename Scalar>
struct LMBlock {
  ParamTensor<Scalar> ln1_gain, ln1_bias;
  ParamTensor<Scalar> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  ParamTensor<Scalar> ln2_gain, ln2_bias;
  ParamTensor<Scalar> w_ff1, b_ff1, w_ff2, b_ff2;
};

/// Miniature decoder-only causal language model:
/// token embedding, learned absolute positions, pre-norm blocks
/// (causal multi-head self-attention + GELU feed-forward), final layer norm
/// and an untied output projection with bias.
template <typename Scalar>
class MiniLM {
public:
  using Mat = Matrix<Scalar>;

  explicit MiniLM(const LMConfig& config);

  const LMConfig& config() const { return config_; }
  int dim() const { return config_.model_dim; }
  int vocab_size() const { return config_.vocab_size; }

  /// Rows of the token embedding table, no positional component.
  Mat embed(std::span<const TokenId> ids) const;
  const Mat& embedding_table() const { return tok_embed_.value; }

  /// Intermediate values kept for the backward pass.
  struct BlockCache {
    Mat x_in;
    LayerNormCache<Scalar> ln1;
    Mat a, q, k, v;
    std::vector<Mat> probs;
    Mat attn;
    Mat h_mid;
    LayerNormCache<Scalar> ln2;
    Mat b, f_pre, f_act;
  };
  struct Cache {
    Eigen::Index length = 0;
    std::vector<Eigen::Index> rows;
    std::vector<BlockCache> blocks;
    Mat h_final_rows;  // residual stream at the requested rows
    LayerNormCache<Scalar> ln_f;
    Mat z;  // final-norm output at requested rows
  };

  /// Logits for every position (T x V).
  Mat forward(const Mat& input_embeds) const;

  /// Logits only at `rows` (|rows| x V). Fills `cache` when non-null.
  Mat forward_rows(const Mat& input_embeds, std::span<const Eigen::Index> rows, Cache* cache) const;

  /// Backpropagates dL/dlogits (at the cached rows) to dL/dinput_embeds.
  /// Parameter gradients are accumulated only when `params_grad` is set;
  /// frozen tensors are never touched.
  Mat backward(const Cache& cache, const Mat& d_logits, bool params_grad);

  /// Input gradient only; never touches parameter gradients.
  Mat input_gradient(const Cache& cache, const Mat& d_logits) const {
    return const_cast<MiniLM*>(this)->backward(cache, d_logits, false);
  }

  /// Adds d_input rows into the token-embedding gradient at `ids`.
  void scatter_embedding_grad(std::span<const TokenId> ids, const Mat& d_rows);

  std::vector<ParamTensor<Scalar>*> parameters();
  std::vector<const ParamTensor<Scalar>*> parameters() const;

  /// Marks every tensor non-trainable.
  void freeze();
  bool frozen() const;

  // Direct access for tests and checkpoints.
  ParamTensor<Scalar>& token_embedding() { return tok_embed_; }
  ParamTensor<Scalar>& position_embedding() { return pos_embed_; }
  ParamTensor<Scalar>& output_weight() { return w_out_; }
  ParamTensor<Scalar>& output_bias() { return b_out_; }
  std::vector<LMBlock<Scalar>>& blocks() { return blocks_; }

private:
  Mat block_forward(const LMBlock<Scalar>& blk, const Mat& x, BlockCache* c) const;
  Mat block_backward(LMBlock<Scalar>& blk, const BlockCache& c, const Mat& dy, bool params_grad);

  LMConfig config_;
  ParamTensor<Scalar> tok_embed_;
  ParamTensor<Scalar> pos_embed_;
  std::vector<LMBlock<Scalar>> blocks_;
  ParamTensor<Scalar> lnf_gain_, lnf_bias_;
  ParamTensor<Scalar> w_out_, b_out_;
};

extern template class MiniLM<double>;
extern template class MiniLM<float>;

/// Values cast between precisions (tensors matched by position).
template <typename To, typename From>
MiniLM<To> convert(const MiniLM<From>& lm);

}  // namespace qpeft
