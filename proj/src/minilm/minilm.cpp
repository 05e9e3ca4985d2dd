#include "qpeft/minilm/minilm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qpeft/numcore/rng.hpp"

namespace qpeft {

void LMConfig::validate() const {
  if (vocab_size < 2) throw ContractError("LMConfig: vocab_size must be >= 2");
  if (model_dim < 1 || heads < 1 || model_dim % heads != 0) {
    throw ContractError("LMConfig: model_dim must be divisible by heads");
  }
  if (layers < 0 || ffn_dim < 1 || max_seq_len < 2) throw ContractError("LMConfig: bad sizes");
}

namespace {

template <typename Scalar>
ParamTensor<Scalar> zeros(std::string name, Eigen::Index r, Eigen::Index c) {
  return ParamTensor<Scalar>(std::move(name), Matrix<Scalar>::Zero(r, c));
}

template <typename Scalar>
ParamTensor<Scalar> ones(std::string name, Eigen::Index c) {
  return ParamTensor<Scalar>(std::move(name), Matrix<Scalar>::Ones(1, c));
}

template <typename Scalar>
ParamTensor<Scalar> gaussian(Rng& rng, std::string name, Eigen::Index r, Eigen::Index c, double sd) {
  return ParamTensor<Scalar>(std::move(name), rng.normal_matrix<Scalar>(r, c, sd));
}

template <typename Scalar, typename Derived>
void add_grad(ParamTensor<Scalar>& p, const Eigen::MatrixBase<Derived>& g, bool enabled) {
  if (enabled && p.trainable) p.grad.noalias() += g;
}

}  // namespace

template <typename Scalar>
MiniLM<Scalar>::MiniLM(const LMConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, "lm-init"));
  const Eigen::Index d = config_.model_dim;
  const Eigen::Index f = config_.ffn_dim;
  const Eigen::Index v = config_.vocab_size;
  const double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double sd_f = 1.0 / std::sqrt(static_cast<double>(f));
  const double resid = 1.0 / std::sqrt(2.0 * std::max(1, config_.layers));

  tok_embed_ = gaussian<Scalar>(rng, "tok_embed", v, d, 1.0);
  pos_embed_ = gaussian<Scalar>(rng, "pos_embed", config_.max_seq_len, d, 0.1);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    LMBlock<Scalar> b;
    b.ln1_gain = ones<Scalar>(p + "ln1_gain", d);
    b.ln1_bias = zeros<Scalar>(p + "ln1_bias", 1, d);
    b.w_q = gaussian<Scalar>(rng, p + "w_q", d, d, sd_d);
    b.b_q = zeros<Scalar>(p + "b_q", 1, d);
    b.w_k = gaussian<Scalar>(rng, p + "w_k", d, d, sd_d);
    b.b_k = zeros<Scalar>(p + "b_k", 1, d);
    b.w_v = gaussian<Scalar>(rng, p + "w_v", d, d, sd_d);
    b.b_v = zeros<Scalar>(p + "b_v", 1, d);
    b.w_o = gaussian<Scalar>(rng, p + "w_o", d, d, sd_d * resid);
    b.b_o = zeros<Scalar>(p + "b_o", 1, d);
    b.ln2_gain = ones<Scalar>(p + "ln2_gain", d);
    b.ln2_bias = zeros<Scalar>(p + "ln2_bias", 1, d);
    b.w_ff1 = gaussian<Scalar>(rng, p + "w_ff1", d, f, sd_d);
    b.b_ff1 = zeros<Scalar>(p + "b_ff1", 1, f);
    b.w_ff2 = gaussian<Scalar>(rng, p + "w_ff2", f, d, sd_f * resid);
    b.b_ff2 = zeros<Scalar>(p + "b_ff2", 1, d);
    blocks_.push_back(std::move(b));
  }
  lnf_gain_ = ones<Scalar>("lnf_gain", d);
  lnf_bias_ = zeros<Scalar>("lnf_bias", 1, d);
  // output rows start as the scaled transposed token table
  w_out_ = ParamTensor<Scalar>("w_out", Matrix<Scalar>(tok_embed_.value.transpose() * static_cast<Scalar>(sd_d)));
  b_out_ = zeros<Scalar>("b_out", 1, v);
}

template <typename Scalar>
auto MiniLM<Scalar>::embed(std::span<const TokenId> ids) const -> Mat {
  Mat out(static_cast<Eigen::Index>(ids.size()), config_.model_dim);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= config_.vocab_size) {
      throw ContractError("embed: token id " + std::to_string(ids[t]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(t)) = tok_embed_.value.row(ids[t]);
  }
  return out;
}

template <typename Scalar>
auto MiniLM<Scalar>::block_forward(const LMBlock<Scalar>& blk, const Mat& x, BlockCache* c) const -> Mat {
  const Eigen::Index T = x.rows();
  const int heads = config_.heads;
  const Eigen::Index dh = config_.model_dim / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  LayerNormCache<Scalar> ln1;
  Mat a = layer_norm(x, blk.ln1_gain.value, blk.ln1_bias.value, c ? &ln1 : nullptr);
  Mat q = a * blk.w_q.value;
  q.rowwise() += blk.b_q.value.row(0);
  Mat k = a * blk.w_k.value;
  k.rowwise() += blk.b_k.value.row(0);
  Mat v = a * blk.w_v.value;
  v.rowwise() += blk.b_v.value.row(0);

  Mat attn(T, config_.model_dim);
  std::vector<Mat> probs;
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    Mat s = (qh * kh.transpose()) * scale;
    Mat p = Mat::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      const auto row = s.row(i).head(i + 1);
      const Scalar mx = row.maxCoeff();
      p.row(i).head(i + 1) = (row.array() - mx).exp().matrix();
      p.row(i).head(i + 1) /= p.row(i).head(i + 1).sum();
    }
    attn.middleCols(h * dh, dh).noalias() = p * v.middleCols(h * dh, dh);
    if (c) probs.push_back(std::move(p));
  }

  Mat h_mid = x + attn * blk.w_o.value;
  h_mid.rowwise() += blk.b_o.value.row(0);

  LayerNormCache<Scalar> ln2;
  Mat b = layer_norm(h_mid, blk.ln2_gain.value, blk.ln2_bias.value, c ? &ln2 : nullptr);
  Mat f_pre = b * blk.w_ff1.value;
  f_pre.rowwise() += blk.b_ff1.value.row(0);
  Mat f_act = gelu(f_pre);
  Mat y = h_mid + f_act * blk.w_ff2.value;
  y.rowwise() += blk.b_ff2.value.row(0);

  if (c) {
    c->x_in = x;
    c->ln1 = std::move(ln1);
    c->a = std::move(a);
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->probs = std::move(probs);
    c->attn = std::move(attn);
    c->h_mid = std::move(h_mid);
    c->ln2 = std::move(ln2);
    c->b = std::move(b);
    c->f_pre = std::move(f_pre);
    c->f_act = std::move(f_act);
  }
  return y;
}

template <typename Scalar>
auto MiniLM<Scalar>::block_backward(LMBlock<Scalar>& blk, const BlockCache& c, const Mat& dy,
                                    bool pg) -> Mat {
  const int heads = config_.heads;
  const Eigen::Index dh = config_.model_dim / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  // feed-forward branch
  add_grad(blk.w_ff2, c.f_act.transpose() * dy, pg);
  add_grad(blk.b_ff2, dy.colwise().sum(), pg);
  Mat d_act = dy * blk.w_ff2.value.transpose();
  Mat d_pre = gelu_backward(c.f_pre, d_act);
  add_grad(blk.w_ff1, c.b.transpose() * d_pre, pg);
  add_grad(blk.b_ff1, d_pre.colwise().sum(), pg);
  Mat d_b = d_pre * blk.w_ff1.value.transpose();
  Mat d_h_mid = dy + layer_norm_backward(c.ln2, blk.ln2_gain.value, d_b,
                                         pg && blk.ln2_gain.trainable ? &blk.ln2_gain.grad : nullptr,
                                         pg && blk.ln2_bias.trainable ? &blk.ln2_bias.grad : nullptr);

  // attention branch
  add_grad(blk.w_o, c.attn.transpose() * d_h_mid, pg);
  add_grad(blk.b_o, d_h_mid.colwise().sum(), pg);
  Mat d_attn = d_h_mid * blk.w_o.value.transpose();
  Mat dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads; ++h) {
    const Mat& p = c.probs[static_cast<std::size_t>(h)];
    const auto d_out = d_attn.middleCols(h * dh, dh);
    Mat dp = d_out * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * d_out;
    Mat ds = softmax_rows_backward(p, dp) * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  add_grad(blk.w_q, c.a.transpose() * dq, pg);
  add_grad(blk.b_q, dq.colwise().sum(), pg);
  add_grad(blk.w_k, c.a.transpose() * dk, pg);
  add_grad(blk.b_k, dk.colwise().sum(), pg);
  add_grad(blk.w_v, c.a.transpose() * dv, pg);
  add_grad(blk.b_v, dv.colwise().sum(), pg);
  Mat da = dq * blk.w_q.value.transpose() + dk * blk.w_k.value.transpose() +
           dv * blk.w_v.value.transpose();
  return d_h_mid + layer_norm_backward(c.ln1, blk.ln1_gain.value, da,
                                       pg && blk.ln1_gain.trainable ? &blk.ln1_gain.grad : nullptr,
                                       pg && blk.ln1_bias.trainable ? &blk.ln1_bias.grad : nullptr);
}

template <typename Scalar>
auto MiniLM<Scalar>::forward_rows(const Mat& input, std::span<const Eigen::Index> rows,
                                  Cache* cache) const -> Mat {
  const Eigen::Index T = input.rows();
  if (input.cols() != config_.model_dim) throw DimensionError("lm_forward: input width != model_dim");
  if (T > config_.max_seq_len) {
    throw LengthError("lm_forward: sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  for (auto r : rows) {
    if (r < 0 || r >= T) throw ContractError("lm_forward: requested row out of range");
  }

  Mat h = input + pos_embed_.value.topRows(T);
  if (cache) {
    cache->length = T;
    cache->rows.assign(rows.begin(), rows.end());
    cache->blocks.assign(blocks_.size(), BlockCache{});
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    h = block_forward(blocks_[l], h, cache ? &cache->blocks[l] : nullptr);
  }
  Mat h_rows(static_cast<Eigen::Index>(rows.size()), config_.model_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) h_rows.row(static_cast<Eigen::Index>(i)) = h.row(rows[i]);

  LayerNormCache<Scalar> lnf;
  Mat z = layer_norm(h_rows, lnf_gain_.value, lnf_bias_.value, cache ? &lnf : nullptr);
  Mat logits = z * w_out_.value;
  logits.rowwise() += b_out_.value.row(0);
  require_finite(logits, "lm_forward");
  if (cache) {
    cache->h_final_rows = std::move(h_rows);
    cache->ln_f = std::move(lnf);
    cache->z = std::move(z);
  }
  return logits;
}

template <typename Scalar>
auto MiniLM<Scalar>::forward(const Mat& input) const -> Mat {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(input.rows()));
  for (Eigen::Index i = 0; i < input.rows(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return forward_rows(input, rows, nullptr);
}

template <typename Scalar>
auto MiniLM<Scalar>::backward(const Cache& cache, const Mat& d_logits, bool pg) -> Mat {
  if (d_logits.rows() != static_cast<Eigen::Index>(cache.rows.size()) ||
      d_logits.cols() != config_.vocab_size) {
    throw DimensionError("lm backward: d_logits shape mismatch");
  }
  add_grad(w_out_, cache.z.transpose() * d_logits, pg);
  add_grad(b_out_, d_logits.colwise().sum(), pg);
  Mat dz = d_logits * w_out_.value.transpose();
  Mat dh_rows = layer_norm_backward(cache.ln_f, lnf_gain_.value, dz,
                                    pg && lnf_gain_.trainable ? &lnf_gain_.grad : nullptr,
                                    pg && lnf_bias_.trainable ? &lnf_bias_.grad : nullptr);
  Mat dh = Mat::Zero(cache.length, config_.model_dim);
  for (std::size_t i = 0; i < cache.rows.size(); ++i) dh.row(cache.rows[i]) += dh_rows.row(static_cast<Eigen::Index>(i));
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    dh = block_backward(blocks_[l], cache.blocks[l], dh, pg);
  }
  if (pg && pos_embed_.trainable) pos_embed_.grad.topRows(cache.length) += dh;
  return dh;
}

template <typename Scalar>
void MiniLM<Scalar>::scatter_embedding_grad(std::span<const TokenId> ids, const Mat& d_rows) {
  if (!tok_embed_.trainable) throw ContractError("gradient accumulated into frozen tensor tok_embed");
  for (std::size_t t = 0; t < ids.size(); ++t) tok_embed_.grad.row(ids[t]) += d_rows.row(static_cast<Eigen::Index>(t));
}

template <typename Scalar>
std::vector<ParamTensor<Scalar>*> MiniLM<Scalar>::parameters() {
  std::vector<ParamTensor<Scalar>*> ps{&tok_embed_, &pos_embed_};
  for (auto& b : blocks_) {
    for (auto* p : {&b.ln1_gain, &b.ln1_bias, &b.w_q, &b.b_q, &b.w_k, &b.b_k, &b.w_v, &b.b_v, &b.w_o,
                    &b.b_o, &b.ln2_gain, &b.ln2_bias, &b.w_ff1, &b.b_ff1, &b.w_ff2, &b.b_ff2}) {
      ps.push_back(p);
    }
  }
  for (auto* p : {&lnf_gain_, &lnf_bias_, &w_out_, &b_out_}) ps.push_back(p);
  return ps;
}

template <typename Scalar>
std::vector<const ParamTensor<Scalar>*> MiniLM<Scalar>::parameters() const {
  auto mut = const_cast<MiniLM*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename Scalar>
void MiniLM<Scalar>::freeze() {
  for (auto* p : parameters()) {
    p->trainable = false;
    p->grad.setZero();
  }
}

template <typename Scalar>
bool MiniLM<Scalar>::frozen() const {
  for (const auto* p : parameters()) {
    if (p->trainable) return false;
  }
  return true;
}

template <typename To, typename From>
MiniLM<To> convert(const MiniLM<From>& lm) {
  MiniLM<To> out(lm.config());
  auto dst = out.parameters();
  auto src = lm.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i]->value = src[i]->value.template cast<To>();
    dst[i]->trainable = src[i]->trainable;
    dst[i]->grad.setZero();
  }
  return out;
}

template class MiniLM<double>;
template class MiniLM<float>;
template MiniLM<float> convert<float, double>(const MiniLM<double>&);
template MiniLM<double> convert<double, float>(const MiniLM<float>&);
template MiniLM<double> convert<double, double>(const MiniLM<double>&);

}  // namespace qpeft
