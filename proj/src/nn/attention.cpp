// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "s2s/errors.hpp"
#include "s2s/nn.hpp"

namespace s2s::nn {

Tensor attention_mask(std::span<const double> key_valid, std::size_t batch, std::size_t heads, std::size_t tq,
                      std::size_t s, bool causal) {
  if (!key_valid.empty() && key_valid.size() != batch * s)
    fail(ErrorKind::ShapeMismatch, "key mask has " + std::to_string(key_valid.size()) + " entries, expected " +
                                       std::to_string(batch * s));
  if (causal && tq > s) fail(ErrorKind::ShapeMismatch, "causal attention with more queries than keys");
  // Query q sits at absolute position q + (s - tq), so an incremental step
  // over a prefix sees the whole prefix.
  const std::size_t offset = s - (causal ? tq : s);
  std::vector<double> mask(batch * heads * tq * s, 0.0);
  bool any_masked = false;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t q = 0; q < tq; ++q) {
      std::size_t legal = 0;
      for (std::size_t t = 0; t < s; ++t) {
        bool ok = key_valid.empty() || key_valid[b * s + t] != 0.0;
        if (causal && t > q + offset) ok = false;
        if (ok) {
          ++legal;
          continue;
        }
        any_masked = true;
        for (std::size_t h = 0; h < heads; ++h) mask[((b * heads + h) * tq + q) * s + t] = kMaskValue;
      }
      if (legal == 0)
        fail(ErrorKind::AllMasked, "query " + std::to_string(q) + " of sequence " + std::to_string(b) +
                                       " has no attendable position");
    }
  if (!any_masked) return {};
  return Tensor::from_data({batch * heads, tq, s}, std::move(mask));
}

AttentionResult dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                                      double scale, double attention_dropout, const ForwardContext& ctx) {
  Tensor scores = ops::bmm(q, k, true);
  if (scale != 1.0) scores = ops::scale(scores, scale);
  if (mask.defined()) scores = ops::add(scores, mask);
  const Tensor weights = ops::softmax(scores);
  const Tensor context = ops::bmm(dropout(weights, attention_dropout, ctx), v);
  return {context, weights};
}

AdditiveAttention::AdditiveAttention(ParamStore& store, const std::string& name, std::size_t query_dim,
                                     std::size_t key_dim, std::size_t value_dim, std::size_t attn_dim,
                                     std::size_t heads, bool output_projection, std::size_t out_dim,
                                     double init_limit, Rng& rng)
    : heads_(heads), has_out_proj_(output_projection) {
  if (heads == 0 || attn_dim % heads != 0 || value_dim % heads != 0)
    fail(ErrorKind::ConfigInvalid, "attention dims " + std::to_string(attn_dim) + "/" + std::to_string(value_dim) +
                                       " not divisible by " + std::to_string(heads) + " heads");
  query_proj_ = Linear(store, name + ".query", query_dim, attn_dim, false, init_limit, rng);
  key_proj_ = Linear(store, name + ".key", key_dim, attn_dim, false, init_limit, rng);
  score_ = store.uniform(name + ".score", {attn_dim}, init_limit, rng);
  if (output_projection) {
    out_proj_ = Linear(store, name + ".output", value_dim, out_dim, true, init_limit, rng);
    out_dim_ = out_dim;
  } else {
    out_dim_ = value_dim;
  }
}

AttentionResult AdditiveAttention::attend(const Tensor& queries, const Tensor& projected_keys, const Tensor& values,
                                          std::span<const double> key_valid, double attention_dropout,
                                          const ForwardContext& ctx) const {
  if (queries.rank() != 3 || values.rank() != 3 || projected_keys.dim(1) != values.dim(1))
    fail(ErrorKind::ShapeMismatch, "additive attention queries " + shape_str(queries.shape()) + ", values " +
                                       shape_str(values.shape()));
  const std::size_t batch = queries.dim(0), tq = queries.dim(1), s = values.dim(1);
  const Tensor qp = ops::linear(queries, query_proj_.weight());
  Tensor scores = ops::additive_scores(qp, projected_keys, score_, heads_);
  const Tensor mask = attention_mask(key_valid, batch, heads_, tq, s, false);
  if (mask.defined()) scores = ops::add(scores, mask);
  const Tensor weights = ops::softmax(scores);
  const Tensor per_head = ops::bmm(dropout(weights, attention_dropout, ctx), ops::split_heads(values, heads_));
  Tensor context = ops::merge_heads(per_head, heads_);
  if (has_out_proj_) context = out_proj_(context);
  return {context, weights};
}

DotAttention::DotAttention(ParamStore& store, const std::string& name, std::size_t model_dim,
                           std::size_t memory_dim, std::size_t heads, bool scaled, Rng& rng)
    : heads_(heads), scaled_(scaled) {
  if (heads == 0 || model_dim % heads != 0)
    fail(ErrorKind::ConfigInvalid, "model dim " + std::to_string(model_dim) + " not divisible by " +
                                       std::to_string(heads) + " heads");
  wq_ = Linear(store, name + ".query", model_dim, model_dim, false, glorot_limit(model_dim, model_dim), rng);
  wk_ = Linear(store, name + ".key", memory_dim, model_dim, false, glorot_limit(memory_dim, model_dim), rng);
  wv_ = Linear(store, name + ".value", memory_dim, model_dim, false, glorot_limit(memory_dim, model_dim), rng);
  wo_ = Linear(store, name + ".output", model_dim, model_dim, false, glorot_limit(model_dim, model_dim), rng);
}

AttentionResult DotAttention::attend(const Tensor& queries, const Tensor& memory, std::span<const double> key_valid,
                                     bool causal, double attention_dropout, const ForwardContext& ctx) const {
  if (queries.rank() != 3 || memory.rank() != 3 || queries.dim(0) != memory.dim(0))
    fail(ErrorKind::ShapeMismatch, "dot attention queries " + shape_str(queries.shape()) + ", memory " +
                                       shape_str(memory.shape()));
  const std::size_t batch = queries.dim(0), tq = queries.dim(1), s = memory.dim(1);
  const std::size_t head_dim = wq_.out() / heads_;
  const Tensor q = ops::split_heads(wq_(queries), heads_);
  const Tensor k = ops::split_heads(wk_(memory), heads_);
  const Tensor v = ops::split_heads(wv_(memory), heads_);
  const Tensor mask = attention_mask(key_valid, batch, heads_, tq, s, causal);
  const double scale = scaled_ ? 1.0 / std::sqrt(static_cast<double>(head_dim)) : 1.0;
  auto result = dot_product_attention(q, k, v, mask, scale, attention_dropout, ctx);
  result.context = wo_(ops::merge_heads(result.context, heads_));
  return result;
}

}  // namespace s2s::nn
