// SPDX-License-Identifier: Apache-2.0
// Shape, linear-algebra and elementwise primitives.
#include <algorithm>
#include <cmath>

#include "op_support.hpp"
#include "s2s/kernels.hpp"
#include "s2s/ops.hpp"

namespace s2s::ops {

using detail::finish;
using detail::grad_of;
using detail::out_grad;
using detail::require;

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape",
          shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> data(x.data().begin(), x.data().end());
  return finish("reshape", std::move(shape), std::move(data), {x}, [](const Tape::Entry& e) {
    if (auto g = grad_of(e.inputs[0]); !g.empty())
      kernels::active().axpy(g.size(), 1.0, out_grad(e).data(), g.data());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
          shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  kernels::active().gemm_nn(m, n, k, a.data().data(), b.data().data(), c.data());
  return finish("matmul", {m, n}, std::move(c), {a, b}, [m, k, n](const Tape::Entry& e) {
    const auto& kt = kernels::active();
    const double* dc = out_grad(e).data();
    if (auto ga = grad_of(e.inputs[0]); !ga.empty())
      kt.gemm_nt(m, k, n, dc, e.inputs[1].data().data(), ga.data());
    if (auto gb = grad_of(e.inputs[1]); !gb.empty())
      kt.gemm_tn(k, n, m, e.inputs[0].data().data(), dc, gb.data());
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(w.rank() == 2 && x.rank() >= 1 && x.shape().back() == w.dim(0), "linear",
          shape_str(x.shape()) + " x " + shape_str(w.shape()));
  const std::size_t in = w.dim(0), out = w.dim(1), rows = x.numel() / in;
  if (bias.defined()) require(bias.numel() == out, "linear", "bias length " + std::to_string(bias.numel()));
  std::vector<double> y(rows * out, 0.0);
  if (bias.defined())
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), y.begin() + r * out);
  kernels::active().gemm_nn(rows, out, in, x.data().data(), w.data().data(), y.data());
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return finish("linear", std::move(shape), std::move(y), std::move(inputs),
                [rows, in, out](const Tape::Entry& e) {
                  const auto& kt = kernels::active();
                  const double* dy = out_grad(e).data();
                  if (auto gx = grad_of(e.inputs[0]); !gx.empty())
                    kt.gemm_nt(rows, in, out, dy, e.inputs[1].data().data(), gx.data());
                  if (auto gw = grad_of(e.inputs[1]); !gw.empty())
                    kt.gemm_tn(in, out, rows, e.inputs[0].data().data(), dy, gw.data());
                  if (e.inputs.size() > 2)
                    if (auto gb = grad_of(e.inputs[2]); !gb.empty())
                      for (std::size_t r = 0; r < rows; ++r) kt.axpy(out, 1.0, dy + r * out, gb.data());
                });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0), "bmm",
          shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == k, "bmm", "inner dimensions differ");
  std::vector<double> c(batch * m * n, 0.0);
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < batch; ++i) {
    const double* ap = a.data().data() + i * m * k;
    const double* bp = b.data().data() + i * k * n;
    double* cp = c.data() + i * m * n;
    if (transpose_b)
      kt.gemm_nt(m, n, k, ap, bp, cp);
    else
      kt.gemm_nn(m, n, k, ap, bp, cp);
  }
  return finish("bmm", {batch, m, n}, std::move(c), {a, b}, [batch, m, k, n, transpose_b](const Tape::Entry& e) {
    const auto& kt = kernels::active();
    auto ga = grad_of(e.inputs[0]);
    auto gb = grad_of(e.inputs[1]);
    const double* av = e.inputs[0].data().data();
    const double* bv = e.inputs[1].data().data();
    const double* dc = out_grad(e).data();
    for (std::size_t i = 0; i < batch; ++i) {
      const double* dci = dc + i * m * n;
      if (!ga.empty()) {
        // da = dc * b^T  (or dc * b when b is stored transposed)
        if (transpose_b)
          kt.gemm_nn(m, k, n, dci, bv + i * k * n, ga.data() + i * m * k);
        else
          kt.gemm_nt(m, k, n, dci, bv + i * k * n, ga.data() + i * m * k);
      }
      if (!gb.empty()) {
        if (transpose_b)  // db[n,k] = dc^T a
          kt.gemm_tn(n, k, m, dci, av + i * m * k, gb.data() + i * k * n);
        else  // db[k,n] = a^T dc
          kt.gemm_tn(k, n, m, av + i * m * k, dci, gb.data() + i * k * n);
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  kernels::active().add(out.size(), a.data().data(), b.data().data(), out.data());
  return finish("add", a.shape(), std::move(out), {a, b}, [](const Tape::Entry& e) {
    const auto& g = out_grad(e);
    for (int i = 0; i < 2; ++i)
      if (auto gi = grad_of(e.inputs[i]); !gi.empty()) kernels::active().axpy(g.size(), 1.0, g.data(), gi.data());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return finish("sub", a.shape(), std::move(out), {a, b}, [](const Tape::Entry& e) {
    const auto& g = out_grad(e);
    if (auto ga = grad_of(e.inputs[0]); !ga.empty()) kernels::active().axpy(g.size(), 1.0, g.data(), ga.data());
    if (auto gb = grad_of(e.inputs[1]); !gb.empty()) kernels::active().axpy(g.size(), -1.0, g.data(), gb.data());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  kernels::active().mul(out.size(), a.data().data(), b.data().data(), out.data());
  return finish("mul", a.shape(), std::move(out), {a, b}, [](const Tape::Entry& e) {
    const auto g = out_grad(e);
    const auto av = e.inputs[0].data();
    const auto bv = e.inputs[1].data();
    if (auto ga = grad_of(e.inputs[0]); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (auto gb = grad_of(e.inputs[1]); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t d = x.shape().back();
  require(bias.numel() == d, "add_bias", "bias length " + std::to_string(bias.numel()) + " vs " + std::to_string(d));
  std::vector<double> out(x.data().begin(), x.data().end());
  const std::size_t rows = out.size() / d;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bias.data()[j];
  return finish("add_bias", x.shape(), std::move(out), {x, bias}, [rows, d](const Tape::Entry& e) {
    const auto g = out_grad(e);
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) kernels::active().axpy(g.size(), 1.0, g.data(), gx.data());
    if (auto gb = grad_of(e.inputs[1]); !gb.empty())
      for (std::size_t r = 0; r < rows; ++r) kernels::active().axpy(d, 1.0, g.data() + r * d, gb.data());
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return finish("scale", x.shape(), std::move(out), {x}, [factor](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty())
      kernels::active().axpy(gx.size(), factor, out_grad(e).data(), gx.data());
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat", "no inputs");
  const Shape& first = parts[0].shape();
  const std::size_t rows = detail::leading(parts[0]);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == first.size() && std::equal(first.begin(), first.end() - 1, p.shape().begin()), "concat",
            shape_str(first) + " vs " + shape_str(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto src = parts[i].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src.data() + r * widths[i], widths[i], out.data() + r * total + offset);
    offset += widths[i];
  }
  Shape shape = first;
  shape.back() = total;
  return finish("concat", std::move(shape), std::move(out), parts, [rows, total, widths](const Tape::Entry& e) {
    const auto g = out_grad(e);
    std::size_t off = 0;
    for (std::size_t i = 0; i < e.inputs.size(); ++i) {
      if (auto gi = grad_of(e.inputs[i]); !gi.empty())
        for (std::size_t r = 0; r < rows; ++r)
          kernels::active().axpy(widths[i], 1.0, g.data() + r * total + off, gi.data() + r * widths[i]);
      off += widths[i];
    }
  });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  const std::size_t d = x.shape().back();
  require(length > 0 && start + length <= d, "slice_last",
          "range [" + std::to_string(start) + "," + std::to_string(start + length) + ") of " + std::to_string(d));
  const std::size_t rows = detail::leading(x);
  std::vector<double> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * d + start, length, out.data() + r * length);
  Shape shape = x.shape();
  shape.back() = length;
  return finish("slice_last", std::move(shape), std::move(out), {x}, [rows, d, start, length](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t r = 0; r < rows; ++r)
        kernels::active().axpy(length, 1.0, g.data() + r * length, gx.data() + r * d + start);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    // Split by sign so exp never overflows.
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return finish("sigmoid", x.shape(), std::move(out), {x}, [](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto y = e.output.data();
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return finish("tanh", x.shape(), std::move(out), {x}, [](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto y = e.output.data();
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.data()[i]);
  return finish("relu", x.shape(), std::move(out), {x}, [](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto xv = e.inputs[0].data();
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0) gx[i] += g[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish("sum", {1}, {s}, {x}, [](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const double g = out_grad(e)[0];
      for (double& v : gx) v += g;
    }
  });
}

Tensor mean_last(const Tensor& x) {
  const std::size_t d = x.shape().back(), rows = detail::leading(x);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x.data()[r * d + j];
    out[r] = s / static_cast<double>(d);
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape = {1};
  return finish("mean_last", std::move(shape), std::move(out), {x}, [rows, d](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r] / static_cast<double>(d);
    }
  });
}

Tensor variance_last(const Tensor& x) {
  const std::size_t d = x.shape().back(), rows = detail::leading(x);
  std::vector<double> out(rows), means(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j];
    const double mu = s / static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (row[j] - mu) * (row[j] - mu);
    means[r] = mu;
    out[r] = v / static_cast<double>(d);
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape = {1};
  return finish("variance_last", std::move(shape), std::move(out), {x},
                [rows, d, means = std::move(means)](const Tape::Entry& e) {
                  if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
                    const auto g = out_grad(e);
                    const auto xv = e.inputs[0].data();
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < d; ++j)
                        gx[r * d + j] += g[r] * 2.0 * (xv[r * d + j] - means[r]) / static_cast<double>(d);
                  }
                });
}

Tensor select_time(const Tensor& x, std::size_t t) {
  require(x.rank() == 3 && t < x.dim(1), "select_time", shape_str(x.shape()) + " at " + std::to_string(t));
  const std::size_t b = x.dim(0), steps = x.dim(1), d = x.dim(2);
  std::vector<double> out(b * d);
  for (std::size_t i = 0; i < b; ++i) std::copy_n(x.data().data() + (i * steps + t) * d, d, out.data() + i * d);
  return finish("select_time", {b, d}, std::move(out), {x}, [b, steps, d, t](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < b; ++i)
        kernels::active().axpy(d, 1.0, g.data() + i * d, gx.data() + (i * steps + t) * d);
    }
  });
}

Tensor stack_time(const std::vector<Tensor>& steps) {
  require(!steps.empty(), "stack_time", "no steps");
  const Shape& s0 = steps[0].shape();
  require(s0.size() == 2, "stack_time", "steps must be [B,d]");
  const std::size_t b = s0[0], d = s0[1], count = steps.size();
  std::vector<double> out(b * count * d);
  for (std::size_t t = 0; t < count; ++t) {
    require(steps[t].shape() == s0, "stack_time", shape_str(steps[t].shape()) + " vs " + shape_str(s0));
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(steps[t].data().data() + i * d, d, out.data() + (i * count + t) * d);
  }
  return finish("stack_time", {b, count, d}, std::move(out), steps, [b, count, d](const Tape::Entry& e) {
    const auto g = out_grad(e);
    for (std::size_t t = 0; t < count; ++t)
      if (auto gt = grad_of(e.inputs[t]); !gt.empty())
        for (std::size_t i = 0; i < b; ++i)
          kernels::active().axpy(d, 1.0, g.data() + (i * count + t) * d, gt.data() + i * d);
  });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3 && heads > 0 && x.dim(2) % heads == 0, "split_heads",
          shape_str(x.shape()) + " into " + std::to_string(heads));
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2), k = d / heads;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < t; ++s)
        std::copy_n(x.data().data() + (i * t + s) * d + h * k, k, out.data() + ((i * heads + h) * t + s) * k);
  return finish("split_heads", {b * heads, t, k}, std::move(out), {x}, [b, t, d, k, heads](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t s = 0; s < t; ++s)
            kernels::active().axpy(k, 1.0, g.data() + ((i * heads + h) * t + s) * k,
                                   gx.data() + (i * t + s) * d + h * k);
    }
  });
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3 && heads > 0 && x.dim(0) % heads == 0, "merge_heads",
          shape_str(x.shape()) + " from " + std::to_string(heads));
  const std::size_t b = x.dim(0) / heads, t = x.dim(1), k = x.dim(2), d = k * heads;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < t; ++s)
        std::copy_n(x.data().data() + ((i * heads + h) * t + s) * k, k, out.data() + (i * t + s) * d + h * k);
  return finish("merge_heads", {b, t, d}, std::move(out), {x}, [b, t, d, k, heads](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t s = 0; s < t; ++s)
            kernels::active().axpy(k, 1.0, g.data() + (i * t + s) * d + h * k,
                                   gx.data() + ((i * heads + h) * t + s) * k);
    }
  });
}

Tensor repeat_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3 && heads > 0, "repeat_heads", shape_str(x.shape()));
  const std::size_t b = x.dim(0), block = x.dim(1) * x.dim(2);
  std::vector<double> out(x.numel() * heads);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      std::copy_n(x.data().data() + i * block, block, out.data() + (i * heads + h) * block);
  return finish("repeat_heads", {b * heads, x.dim(1), x.dim(2)}, std::move(out), {x},
                [b, block, heads](const Tape::Entry& e) {
                  if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
                    const auto g = out_grad(e);
                    for (std::size_t i = 0; i < b; ++i)
                      for (std::size_t h = 0; h < heads; ++h)
                        kernels::active().axpy(block, 1.0, g.data() + (i * heads + h) * block,
                                               gx.data() + i * block);
                  }
                });
}

Tensor scale_grad(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish("scale_grad", x.shape(), std::move(out), {x}, [factor](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty())
      kernels::active().axpy(gx.size(), factor, out_grad(e).data(), gx.data());
  });
}

Tensor row_blend(std::span<const double> keep, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape() && a.rank() >= 1 && keep.size() == a.dim(0), "row_blend",
          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t rows = a.dim(0), width = a.numel() / rows;
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& src = keep[r] != 0.0 ? a : b;
    std::copy_n(src.data().data() + r * width, width, out.data() + r * width);
  }
  std::vector<double> mask(keep.begin(), keep.end());
  return finish("row_blend", a.shape(), std::move(out), {a, b}, [rows, width, mask](const Tape::Entry& e) {
    const auto g = out_grad(e);
    auto ga = grad_of(e.inputs[0]);
    auto gb = grad_of(e.inputs[1]);
    for (std::size_t r = 0; r < rows; ++r) {
      auto target = mask[r] != 0.0 ? ga : gb;
      if (!target.empty()) kernels::active().axpy(width, 1.0, g.data() + r * width, target.data() + r * width);
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require(x.rank() >= 1 && !rows.empty(), "gather_rows", shape_str(x.shape()));
  const std::size_t n = x.dim(0), width = x.numel() / n;
  std::vector<double> out(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < n, "gather_rows", "row " + std::to_string(rows[i]) + " of " + std::to_string(n));
    std::copy_n(x.data().data() + rows[i] * width, width, out.data() + i * width);
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return finish("gather_rows", std::move(shape), std::move(out), {x}, [width, idx](const Tape::Entry& e) {
    if (auto gx = grad_of(e.inputs[0]); !gx.empty()) {
      const auto g = out_grad(e);
      for (std::size_t i = 0; i < idx.size(); ++i)
        kernels::active().axpy(width, 1.0, g.data() + i * width, gx.data() + idx[i] * width);
    }
  });
}

}  // namespace s2s::ops
