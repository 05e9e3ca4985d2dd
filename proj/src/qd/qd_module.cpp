#include "qpeft/qd/qd_module.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "qpeft/numcore/rng.hpp"

namespace qpeft {

std::string to_string(Variant v) { return v == Variant::R ? "r" : "a"; }

Variant parse_variant(const std::string& s) {
  if (s == "r" || s == "R") return Variant::R;
  if (s == "a" || s == "A") return Variant::A;
  throw ContractError("unknown variant '" + s + "' (expected r or a)");
}

void QDConfig::validate() const {
  if (k < 1) throw ContractError("QDConfig: k must be >= 1");
  if (heads < 1 || model_dim % heads != 0) throw ContractError("QDConfig: heads must divide model_dim");
  if (mlp_layers < 0 || mlp_layers > 2) throw ContractError("QDConfig: mlp_layers must be 0, 1 or 2");
}

template <typename Scalar>
Matrix<Scalar> cosine_matrix(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                             const Matrix<Scalar>& f_embed, const Matrix<Scalar>& llm_embed) {
  auto normalized = [](const Matrix<Scalar>& table, std::span<const TokenId> ids) {
    Matrix<Scalar> m(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      m.row(r) = table.row(ids[i]);
      const Scalar n = m.row(r).norm();
      if (n > Scalar(0)) {
        m.row(r) /= n;
      } else {
        m.row(r).setZero();
      }
    }
    return m;
  };
  return normalized(f_embed, query_ids) * normalized(llm_embed, doc_ids).transpose();
}

template <typename Scalar>
TokenSeq topk_unique(const Matrix<Scalar>& cos, std::span<const TokenId> doc_ids, int k) {
  if (cos.cols() != static_cast<Eigen::Index>(doc_ids.size())) {
    throw DimensionError("topk_unique: cosine columns != document length");
  }
  std::map<TokenId, Scalar> best;
  if (cos.rows() > 0) {
    for (std::size_t j = 0; j < doc_ids.size(); ++j) {
      const Scalar s = cos.col(static_cast<Eigen::Index>(j)).maxCoeff();
      auto [it, inserted] = best.emplace(doc_ids[j], s);
      if (!inserted && s > it->second) it->second = s;
    }
  }
  std::vector<std::pair<TokenId, Scalar>> ranked(best.begin(), best.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  TokenSeq out;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < k; ++i) out.push_back(ranked[i].first);
  return out;
}

template <typename Scalar>
Matrix<Scalar> mlp_apply(const Matrix<Scalar>& x, const std::vector<MlpLayer<Scalar>>& layers,
                         MlpCache<Scalar>* cache) {
  Matrix<Scalar> h = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix<Scalar> y = h * layers[l].weight.value;
    y.rowwise() += layers[l].bias.value.row(0);
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(y);
    }
    h = l + 1 < layers.size() ? Matrix<Scalar>(y.array().tanh().matrix()) : std::move(y);
  }
  return h;
}

namespace {

template <typename Scalar>
Matrix<Scalar> near_identity(Rng& rng, Eigen::Index d) {
  return Matrix<Scalar>::Identity(d, d) + rng.normal_matrix<Scalar>(d, d, 0.02);
}

template <typename Scalar>
Matrix<Scalar> gather_rows(const Matrix<Scalar>& table, std::span<const TokenId> ids) {
  Matrix<Scalar> m(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw ContractError("token id out of range");
    m.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  }
  return m;
}

}  // namespace

template <typename Scalar>
QDModule<Scalar>::QDModule(const QDConfig& config, const Mat& llm_embed) : config_(config) {
  config_.validate();
  if (llm_embed.cols() != config_.model_dim) throw DimensionError("QDModule: table width != model_dim");
  const Eigen::Index d = config_.model_dim;
  Rng rng(derive_seed(config_.seed, "qd-init"));
  f_embed_ = ParamTensor<Scalar>("f_embed", llm_embed);
  if (config_.variant == Variant::A) {
    w_q_ = ParamTensor<Scalar>("w_q", near_identity<Scalar>(rng, d));
    w_k_ = ParamTensor<Scalar>("w_k", near_identity<Scalar>(rng, d));
    w_v_ = ParamTensor<Scalar>("w_v", near_identity<Scalar>(rng, d));
    w_o_ = ParamTensor<Scalar>("w_o", near_identity<Scalar>(rng, d));
  }
  for (int l = 0; l < config_.mlp_layers; ++l) {
    const std::string p = "mlp." + std::to_string(l) + ".";
    mlp_.push_back({ParamTensor<Scalar>(p + "weight", near_identity<Scalar>(rng, d)),
                    ParamTensor<Scalar>(p + "bias", Mat::Zero(1, d))});
  }
}

template <typename Scalar>
std::vector<ParamTensor<Scalar>*> QDModule<Scalar>::parameters() {
  std::vector<ParamTensor<Scalar>*> ps{&f_embed_};
  if (config_.variant == Variant::A) {
    for (auto* p : {&w_q_, &w_k_, &w_v_, &w_o_}) ps.push_back(p);
  }
  for (auto& l : mlp_) {
    ps.push_back(&l.weight);
    ps.push_back(&l.bias);
  }
  return ps;
}

template <typename Scalar>
std::vector<const ParamTensor<Scalar>*> QDModule<Scalar>::parameters() const {
  auto mut = const_cast<QDModule*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename Scalar>
auto QDModule<Scalar>::attention_hint(std::span<const TokenId> query_ids,
                                      std::span<const TokenId> doc_ids, const Mat& llm_embed,
                                      Cache* cache) const -> Mat {
  if (doc_ids.empty()) throw ContractError("qd_a_hint: empty document has no keys to attend");
  const int heads = config_.heads;
  const Eigen::Index dh = config_.model_dim / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  Mat xq = gather_rows(f_embed_.value, query_ids);
  Mat xd = gather_rows(llm_embed, doc_ids);
  Mat q = xq * w_q_.value;
  Mat k = xd * w_k_.value;
  Mat v = xd * w_v_.value;
  Mat concat(q.rows(), config_.model_dim);
  std::vector<Mat> probs;
  for (int h = 0; h < heads; ++h) {
    Mat p = softmax_rows<Scalar>((q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale);
    concat.middleCols(h * dh, dh).noalias() = p * v.middleCols(h * dh, dh);
    if (cache) probs.push_back(std::move(p));
  }
  Mat out = concat * w_o_.value;
  if (cache) {
    cache->x_query = std::move(xq);
    cache->x_doc = std::move(xd);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

template <typename Scalar>
auto QDModule<Scalar>::hint(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                            const Mat& llm_embed, Cache* cache,
                            const TokenSeq* fixed_selection) const -> Mat {
  Mat pre;
  if (cache) cache->query.assign(query_ids.begin(), query_ids.end());
  if (config_.variant == Variant::R) {
    TokenSeq selected;
    if (fixed_selection) {
      selected = *fixed_selection;
    } else if (!doc_ids.empty() && !query_ids.empty()) {
      selected = topk_unique(cosine_matrix(query_ids, doc_ids, f_embed_.value, llm_embed), doc_ids, config_.k);
    }
    pre = gather_rows(f_embed_.value, selected);
    if (cache) cache->selected = std::move(selected);
  } else {
    pre = attention_hint(query_ids, doc_ids, llm_embed, cache);
  }
  Mat out = mlp_apply(pre, mlp_, cache ? &cache->mlp : nullptr);
  require_finite(out, "qd hint");
  return out;
}

template <typename Scalar>
void QDModule<Scalar>::backward(const Cache& c, const Mat& d_hint, GradSet<Scalar>& grads) const {
  const std::size_t mlp_offset = config_.variant == Variant::A ? 5 : 1;
  if (grads.size() != mlp_offset + 2 * mlp_.size()) throw DimensionError("qd backward: grad set size");

  Mat d = d_hint;
  for (std::size_t l = mlp_.size(); l-- > 0;) {
    if (l + 1 < mlp_.size()) {
      // d passes through the tanh that followed layer l
      d = (d.array() * (Scalar(1) - c.mlp.pre[l].array().tanh().square())).matrix();
    }
    grads[mlp_offset + 2 * l].noalias() += c.mlp.inputs[l].transpose() * d;
    grads[mlp_offset + 2 * l + 1] += d.colwise().sum();
    d = d * mlp_[l].weight.value.transpose();
  }

  Matrix<Scalar>& g_embed = grads[0];
  if (config_.variant == Variant::R) {
    for (std::size_t i = 0; i < c.selected.size(); ++i) g_embed.row(c.selected[i]) += d.row(static_cast<Eigen::Index>(i));
    return;
  }

  const int heads = config_.heads;
  const Eigen::Index dh = config_.model_dim / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  grads[4].noalias() += c.concat.transpose() * d;  // W_O
  Mat d_concat = d * w_o_.value.transpose();
  Mat dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads; ++h) {
    const Mat& p = c.probs[static_cast<std::size_t>(h)];
    const auto d_out = d_concat.middleCols(h * dh, dh);
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * d_out;
    Mat dp = d_out * c.v.middleCols(h * dh, dh).transpose();
    Mat ds = softmax_rows_backward(p, dp) * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  grads[1].noalias() += c.x_query.transpose() * dq;
  grads[2].noalias() += c.x_doc.transpose() * dk;
  grads[3].noalias() += c.x_doc.transpose() * dv;
  Mat dxq = dq * w_q_.value.transpose();
  for (std::size_t i = 0; i < c.query.size(); ++i) g_embed.row(c.query[i]) += dxq.row(static_cast<Eigen::Index>(i));
}

template class QDModule<double>;
template class QDModule<float>;
template Matrix<double> cosine_matrix(std::span<const TokenId>, std::span<const TokenId>, const Matrix<double>&, const Matrix<double>&);
template Matrix<float> cosine_matrix(std::span<const TokenId>, std::span<const TokenId>, const Matrix<float>&, const Matrix<float>&);
template TokenSeq topk_unique(const Matrix<double>&, std::span<const TokenId>, int);
template TokenSeq topk_unique(const Matrix<float>&, std::span<const TokenId>, int);
template Matrix<double> mlp_apply(const Matrix<double>&, const std::vector<MlpLayer<double>>&, MlpCache<double>*);
template Matrix<float> mlp_apply(const Matrix<float>&, const std::vector<MlpLayer<float>>&, MlpCache<float>*);

}  // namespace qpeft
