// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "s2s/tensor.hpp"

// Differentiable primitives. Every op checks shapes (ShapeMismatch), rejects
// non-finite outputs (NonFiniteValue) and records a tape entry when grad mode
// is on and any input requires a gradient. No implicit broadcasting: the only
// broadcast is a bias vector over the trailing axis.
namespace s2s::ops {

Tensor reshape(const Tensor& x, Shape shape);

// a [m,k] x b [k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [..., in] x w [in, out] (+ bias [out])
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});
// a [B,m,k] x b [B,k,n], or b [B,n,k] when transpose_b
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);

Tensor concat(const std::vector<Tensor>& parts);  // along the last axis
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x);      // last axis
Tensor log_softmax(const Tensor& x);  // last axis

// ids index rows of table [V, d]; result shape = prefix + [d].
Tensor embedding(const Tensor& table, std::span<const int> ids, Shape prefix);

// x [B,T,c_in], kernel [width, c_in, c_out]; zero padding on each side.
Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t pad_left, std::size_t pad_right);

Tensor sum(const Tensor& x);
Tensor mean_last(const Tensor& x);      // drops the last axis
Tensor variance_last(const Tensor& x);  // population variance, drops the last axis

// gain * (x - mean) / sqrt(var + eps) + bias over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
// Same, applied independently to `groups` equal chunks of the last axis;
// gain and bias span the full last axis.
Tensor group_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, std::size_t groups,
                        double eps);

Tensor select_time(const Tensor& x, std::size_t t);        // [B,T,d] -> [B,d]
Tensor stack_time(const std::vector<Tensor>& steps);        // T x [B,d] -> [B,T,d]
Tensor split_heads(const Tensor& x, std::size_t heads);    // [B,T,h*k] -> [B*h,T,k]
Tensor merge_heads(const Tensor& x, std::size_t heads);    // [B*h,T,k] -> [B,T,h*k]
Tensor repeat_heads(const Tensor& x, std::size_t heads);   // [B,S,d] -> [B*h,S,d]

// score[b*h+i, q, s] = sum_j v[i*k+j] * tanh(qp[b,q,i*k+j] + kp[b,s,i*k+j])
Tensor additive_scores(const Tensor& qp, const Tensor& kp, const Tensor& v, std::size_t heads);

// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Identity forward; multiplies the incoming gradient by factor.
Tensor scale_grad(const Tensor& x, double factor);

// g * v / ||v||_2 with g a single-element tensor.
Tensor weight_norm(const Tensor& v, const Tensor& g);

// Row-wise select: keep[r] ? a[r] : b[r] for a, b of shape [B, ...].
Tensor row_blend(std::span<const double> keep, const Tensor& a, const Tensor& b);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

// sum_n weight[n] * CE(q_n, softmax(logits[n])) with q_n = (1-u) onehot + u/V.
Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> targets,
                         std::span<const double> weights, double smoothing);

}  // namespace s2s::ops
