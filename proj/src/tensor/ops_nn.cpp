// SPDX-License-Identifier: Apache-2.0
// Normalization, attention, convolution and loss primitives.
#include <algorithm>
#include <cmath>
#include <limits>

#include "op_support.hpp"
#include "s2s/kernels.hpp"
#include "s2s/ops.hpp"

namespace s2s::ops {

using detail::finish;
using detail::grad_of;
using detail::out_grad;
using detail::require;

namespace {

void softmax_row(const double* x, double* y, std::size_t d) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    y[j] = std::exp(x[j] - mx);
    s += y[j];
  }
  const double inv = 1.0 / s;
  for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
}

double log_sum_exp(const double* x, std::size_t d) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += std::exp(x[j] - mx);
  return mx + std::log(s);
}

// Uniform double in [0,1) from the top 53 bits; independent of the standard
// library's distribution implementation.
double unit_uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct NormCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

// Normalizes `rows` chunks of width d. Chunk r uses gain/bias at offset
// (r % groups) * d.
NormCache normalize(const double* x, double* y, std::size_t rows, std::size_t d, std::size_t groups,
                    const double* gain, const double* bias, double eps) {
  NormCache cache{std::vector<double>(rows * d), std::vector<double>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[r] = inv;
    const std::size_t off = (r % groups) * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mu) * inv;
      cache.xhat[r * d + j] = xh;
      y[r * d + j] = gain[off + j] * xh + bias[off + j];
    }
  }
  return cache;
}

void normalize_backward(const Tape::Entry& e, const NormCache& cache, std::size_t rows, std::size_t d,
                        std::size_t groups) {
  const auto dy = out_grad(e);
  const auto gain = e.inputs[1].data();
  auto gx = grad_of(e.inputs[0]);
  auto gg = grad_of(e.inputs[1]);
  auto gb = grad_of(e.inputs[2]);
  std::vector<double> dxh(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t off = (r % groups) * d;
    const double* xh = cache.xhat.data() + r * d;
    const double* dyr = dy.data() + r * d;
    if (!gg.empty())
      for (std::size_t j = 0; j < d; ++j) gg[off + j] += dyr[j] * xh[j];
    if (!gb.empty())
      for (std::size_t j = 0; j < d; ++j) gb[off + j] += dyr[j];
    if (gx.empty()) continue;
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dxh[j] = dyr[j] * gain[off + j];
      mean_d += dxh[j];
      mean_dx += dxh[j] * xh[j];
    }
    mean_d /= static_cast<double>(d);
    mean_dx /= static_cast<double>(d);
    const double inv = cache.inv_std[r];
    for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += inv * (dxh[j] - mean_d - xh[j] * mean_dx);
  }
}

}  // namespace

Tensor softmax(const Tensor& x) {
  const std::size_t d = x.shape().back(), rows = detail::leading(x);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data().data() + r * d, out.data() + r * d, d);
  return finish("softmax", x.shape(), std::move(out), {x}, [rows, d](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto y = e.output.data();
      const auto g = out_grad(e);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.data() + r * d;
        const double* gr = g.data() + r * d;
        double dotp = 0.0;
        for (std::size_t j = 0; j < d; ++j) dotp += gr[j] * yr[j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += yr[j] * (gr[j] - dotp);
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t d = x.shape().back(), rows = detail::leading(x);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    const double lse = log_sum_exp(xr, d);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xr[j] - lse;
  }
  return finish("log_softmax", x.shape(), std::move(out), {x}, [rows, d](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto y = e.output.data();
      const auto g = out_grad(e);
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < d; ++j) gs += g[r * d + j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] - std::exp(y[r * d + j]) * gs;
      }
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, Shape prefix) {
  require(table.rank() == 2, "embedding", "table must be [V,d]");
  require(shape_numel(prefix) == ids.size(), "embedding",
          std::to_string(ids.size()) + " ids for prefix " + shape_str(prefix));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < vocab, "embedding",
            "id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  prefix.push_back(d);
  std::vector<int> idx(ids.begin(), ids.end());
  return finish("embedding", std::move(prefix), std::move(out), {table}, [d, idx](const Tape::Entry& e) {
    if (auto gt = grad_of(e.inputs[0]); !gt.empty()) {
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < idx.size(); ++i)
        kernels::active().axpy(d, 1.0, g.data() + i * d, gt.data() + static_cast<std::size_t>(idx[i]) * d);
    }
  });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t pad_left, std::size_t pad_right) {
  require(x.rank() == 3 && kernel.rank() == 3 && kernel.dim(1) == x.dim(2), "conv1d",
          shape_str(x.shape()) + " * " + shape_str(kernel.shape()));
  const std::size_t b = x.dim(0), t_in = x.dim(1), cin = x.dim(2);
  const std::size_t width = kernel.dim(0), cout = kernel.dim(2);
  require(t_in + pad_left + pad_right >= width, "conv1d", "sequence shorter than kernel");
  const std::size_t t_out = t_in + pad_left + pad_right - width + 1;
  // Output position t reads input s = t + j - pad_left for tap j.
  auto valid_range = [=](std::size_t j) {
    const long lo = std::max<long>(0, static_cast<long>(pad_left) - static_cast<long>(j));
    const long hi = std::min<long>(static_cast<long>(t_out),
                                   static_cast<long>(t_in + pad_left) - static_cast<long>(j));
    return std::pair<long, long>{lo, hi};
  };
  std::vector<double> out(b * t_out * cout, 0.0);
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const auto [lo, hi] = valid_range(j);
      if (hi <= lo) continue;
      const std::size_t s0 = static_cast<std::size_t>(lo) + j - pad_left;
      kt.gemm_nn(static_cast<std::size_t>(hi - lo), cout, cin, x.data().data() + (i * t_in + s0) * cin,
                 kernel.data().data() + j * cin * cout, out.data() + (i * t_out + static_cast<std::size_t>(lo)) * cout);
    }
  return finish("conv1d", {b, t_out, cout}, std::move(out), {x, kernel},
                [=](const Tape::Entry& e) {
                  const auto& k2 = kernels::active();
                  auto gx = grad_of(e.inputs[0]);
                  auto gk = grad_of(e.inputs[1]);
                  const auto dy = out_grad(e);
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < width; ++j) {
                      const auto [lo, hi] = valid_range(j);
                      if (hi <= lo) continue;
                      const std::size_t m = static_cast<std::size_t>(hi - lo);
                      const std::size_t s0 = static_cast<std::size_t>(lo) + j - pad_left;
                      const double* dyp = dy.data() + (i * t_out + static_cast<std::size_t>(lo)) * cout;
                      if (!gx.empty())
                        k2.gemm_nt(m, cin, cout, dyp, e.inputs[1].data().data() + j * cin * cout,
                                   gx.data() + (i * t_in + s0) * cin);
                      if (!gk.empty())
                        k2.gemm_tn(cin, cout, m, e.inputs[0].data().data() + (i * t_in + s0) * cin, dyp,
                                   gk.data() + j * cin * cout);
                    }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return group_layer_norm(x, gain, bias, 1, eps);
}

Tensor group_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, std::size_t groups,
                        double eps) {
  const std::size_t width = x.shape().back();
  require(groups > 0 && width % groups == 0, "layer_norm", "width " + std::to_string(width) + " in " +
                                                               std::to_string(groups) + " groups");
  require(gain.numel() == width && bias.numel() == width, "layer_norm",
          "gain/bias length must equal " + std::to_string(width));
  if (!(eps > 0.0)) fail(ErrorKind::ConfigInvalid, "layer_norm epsilon must be positive");
  const std::size_t d = width / groups, rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto cache = normalize(x.data().data(), out.data(), rows, d, groups, gain.data().data(), bias.data().data(), eps);
  return finish("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                [cache = std::move(cache), rows, d, groups](const Tape::Entry& e) {
                  normalize_backward(e, cache, rows, d, groups);
                });
}

Tensor additive_scores(const Tensor& qp, const Tensor& kp, const Tensor& v, std::size_t heads) {
  require(qp.rank() == 3 && kp.rank() == 3 && qp.dim(0) == kp.dim(0) && qp.dim(2) == kp.dim(2), "additive_scores",
          shape_str(qp.shape()) + " vs " + shape_str(kp.shape()));
  const std::size_t b = qp.dim(0), tq = qp.dim(1), s = kp.dim(1), d = qp.dim(2);
  require(heads > 0 && d % heads == 0 && v.numel() == d, "additive_scores",
          "dim " + std::to_string(d) + " heads " + std::to_string(heads));
  const std::size_t k = d / heads;
  // tanh activations, laid out [b, q, s, d]
  std::vector<double> act(b * tq * s * d);
  std::vector<double> out(b * heads * tq * s);
  const double* vv = v.data().data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t q = 0; q < tq; ++q) {
      const double* qrow = qp.data().data() + (i * tq + q) * d;
      for (std::size_t t = 0; t < s; ++t) {
        const double* krow = kp.data().data() + (i * s + t) * d;
        double* arow = act.data() + ((i * tq + q) * s + t) * d;
        for (std::size_t j = 0; j < d; ++j) arow[j] = std::tanh(qrow[j] + krow[j]);
        for (std::size_t h = 0; h < heads; ++h) {
          double acc = 0.0;
          for (std::size_t j = h * k; j < (h + 1) * k; ++j) acc += vv[j] * arow[j];
          out[((i * heads + h) * tq + q) * s + t] = acc;
        }
      }
    }
  return finish("additive_scores", {b * heads, tq, s}, std::move(out), {qp, kp, v},
                [act = std::move(act), b, tq, s, d, k, heads](const Tape::Entry& e) {
                  const auto g = out_grad(e);
                  auto gq = grad_of(e.inputs[0]);
                  auto gk = grad_of(e.inputs[1]);
                  auto gv = grad_of(e.inputs[2]);
                  const double* vv = e.inputs[2].data().data();
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t q = 0; q < tq; ++q)
                      for (std::size_t t = 0; t < s; ++t) {
                        const double* arow = act.data() + ((i * tq + q) * s + t) * d;
                        for (std::size_t h = 0; h < heads; ++h) {
                          const double gs = g[((i * heads + h) * tq + q) * s + t];
                          if (gs == 0.0) continue;
                          for (std::size_t j = h * k; j < (h + 1) * k; ++j) {
                            if (!gv.empty()) gv[j] += gs * arow[j];
                            const double dz = gs * vv[j] * (1.0 - arow[j] * arow[j]);
                            if (!gq.empty()) gq[(i * tq + q) * d + j] += dz;
                            if (!gk.empty()) gk[(i * s + t) * d + j] += dz;
                          }
                        }
                      }
                });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::InvalidProbability, "dropout probability " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = unit_uniform(rng) < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  kernels::active().mul(out.size(), x.data().data(), mask.data(), out.data());
  return finish("dropout", x.shape(), std::move(out), {x}, [mask = std::move(mask)](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    }
  });
}

Tensor weight_norm(const Tensor& v, const Tensor& g) {
  require(g.numel() == 1, "weight_norm", "scale must have one element");
  double sq = 0.0;
  for (double x : v.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) fail(ErrorKind::ZeroDirection, "weight_norm direction has zero norm");
  const double gv = g.data()[0];
  std::vector<double> out(v.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gv * v.data()[i] / norm;
  return finish("weight_norm", v.shape(), std::move(out), {v, g}, [norm](const Tape::Entry& e) {
    const auto dw = out_grad(e);
    const auto vd = e.inputs[0].data();
    const double gval = e.inputs[1].data()[0];
    double proj = 0.0;
    for (std::size_t i = 0; i < dw.size(); ++i) proj += dw[i] * vd[i];
    if (auto gv = grad_of(e.inputs[0]); !gv.empty()) {
      const double c = gval / norm;
      const double r = proj / (norm * norm);
      for (std::size_t i = 0; i < dw.size(); ++i) gv[i] += c * (dw[i] - vd[i] * r);
    }
    if (auto gg = grad_of(e.inputs[1]); !gg.empty()) gg[0] += proj / norm;
  });
}

Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> targets, std::span<const double> weights,
                         double smoothing) {
  require(logits.rank() == 2 && targets.size() == logits.dim(0) && weights.size() == targets.size(),
          "label_smoothed_ce", shape_str(logits.shape()) + " with " + std::to_string(targets.size()) + " targets");
  if (!(smoothing >= 0.0 && smoothing < 1.0))
    fail(ErrorKind::InvalidProbability, "label smoothing " + std::to_string(smoothing));
  const std::size_t n = logits.dim(0), vocab = logits.dim(1);
  const double off = smoothing / static_cast<double>(vocab);
  const double on = 1.0 - smoothing + off;
  std::vector<double> probs(n * vocab);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab)
      fail(ErrorKind::TargetOutOfRange, "target " + std::to_string(targets[r]) + " with vocabulary " +
                                            std::to_string(vocab));
    if (weights[r] == 0.0) continue;
    const double* xr = logits.data().data() + r * vocab;
    const double lse = log_sum_exp(xr, vocab);
    double row = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      const double lp = xr[j] - lse;
      probs[r * vocab + j] = std::exp(lp);
      const double q = static_cast<std::size_t>(targets[r]) == j ? on : off;
      row -= q * lp;
    }
    loss += weights[r] * row;
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return finish("label_smoothed_ce", {1}, {loss}, {logits},
                [probs = std::move(probs), tg = std::move(tg), wt = std::move(wt), n, vocab, on,
                 off](const Tape::Entry& e) {
                  if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
                    const double g = out_grad(e)[0];
                    for (std::size_t r = 0; r < n; ++r) {
                      if (wt[r] == 0.0) continue;
                      const double scale = g * wt[r];
                      for (std::size_t j = 0; j < vocab; ++j) {
                        const double q = static_cast<std::size_t>(tg[r]) == j ? on : off;
                        gx[r * vocab + j] += scale * (probs[r * vocab + j] - q);
                      }
                    }
                  }
                });
}

}  // namespace s2s::ops
