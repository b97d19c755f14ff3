// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace s2s {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
};

// Shared handle to a dense row-major f64 array. Copying a Tensor aliases the
// same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> data_mut() { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  // Allocates a zeroed buffer on first use.
  std::span<double> grad_mut();
  void zero_grad() { node_->grad.clear(); }

  Tensor clone() const;
  TensorNode* node() const noexcept { return node_.get(); }
  bool same(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Ordered record of differentiable operations. Entries are appended as ops
// run, so an entry's inputs are always leaves or outputs of earlier entries.
class Tape {
 public:
  struct Entry;
  using BackwardFn = std::function<void(const Entry&)>;
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  void clear() noexcept { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the backward rules newest-first.
  // Leaf gradients accumulate into existing buffers. The tape is cleared
  // afterwards, so each recorded graph is consumed by exactly one backward.
  void backward(const Tensor& loss);

 private:
  std::vector<Entry> entries_;
};

// Per-thread active tape. Ops record into it.
Tape& current_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

void backward(const Tensor& loss);

}  // namespace s2s
