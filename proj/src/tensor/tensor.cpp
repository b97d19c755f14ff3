// SPDX-License-Identifier: Apache-2.0
#include "s2s/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "s2s/errors.hpp"

namespace s2s {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (std::size_t d : shape)
    if (d == 0) fail(ErrorKind::ShapeMismatch, "zero-sized dimension in " + shape_str(shape));
  auto node = std::make_shared<TensorNode>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape)
    if (d == 0) fail(ErrorKind::ShapeMismatch, "zero-sized dimension in " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    fail(ErrorKind::ShapeMismatch, "data length " + std::to_string(data.size()) +
                                       " does not match shape " + shape_str(shape));
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::span<double> Tensor::grad_mut() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<TensorNode>(*node_);
  return Tensor(std::move(node));
}

namespace {
thread_local Tape default_tape;
thread_local Tape* active_tape = nullptr;
thread_local bool grad_enabled = true;
}  // namespace

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail(ErrorKind::NotScalarLoss,
         loss.defined() ? "loss has shape " + shape_str(loss.shape()) : "undefined loss");
  Tensor seed = loss;
  seed.grad_mut()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not on a path to the loss
    it->backward(*it);
  }
  // Intermediate buffers die with their entries; only leaves keep gradients.
  for (auto& e : entries_) e.output.zero_grad();
  entries_.clear();
}

Tape& current_tape() { return active_tape ? *active_tape : default_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(active_tape) { active_tape = &tape; }
TapeScope::~TapeScope() { active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

bool grad_mode_enabled() { return grad_enabled; }

void backward(const Tensor& loss) { current_tape().backward(loss); }

}  // namespace s2s
