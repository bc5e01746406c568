// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-free reverse-mode automatic differentiation over rank-2 tensors.
//
// Every operation returns a Var that remembers its inputs and a backward rule.
// Backward rules are themselves written with differentiable operations, so
// gradients can be differentiated again (double backward). This is what the
// Hessian-vector products build on.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "trainscope/tensor.hpp"

namespace trainscope::ad {

class Var;

/// Maps (output, upstream gradient) to one gradient per input.
using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad)>;

struct Node {
  Tensor value;
  std::vector<Var> inputs;
  BackwardFn backward;
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::vector<Var>& inputs() const { return node_->inputs; }
  const Var& input(std::size_t i) const { return node_->inputs[i]; }

  bool valid() const { return static_cast<bool>(node_); }
  const Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var leaf(Tensor value, bool requires_grad = true);
Var constant(Tensor value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Broadcasting helpers: a 1xM row repeated n times, an Nx1 column repeated m times.
Var expand_rows(const Var& row, std::size_t n);
Var expand_cols(const Var& col, std::size_t m);
Var sum_rows(const Var& a);  // NxM -> 1xM
Var sum_cols(const Var& a);  // NxM -> Nx1
Var sum_all(const Var& a);   // NxM -> 1x1

Var exp(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var logsumexp_cols(const Var& a);  // row-wise log-sum-exp, NxM -> Nx1

/// Gradients of a scalar output with respect to `wrt`.
///
/// With `create_graph` the returned gradients are themselves differentiable.
/// Inputs that do not influence the output receive zero gradients.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

}  // namespace trainscope::ad
