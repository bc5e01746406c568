// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "trainscope/errors.hpp"

namespace trainscope::ad {
namespace {

thread_local bool g_grad_enabled = true;

Var make_node(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.requires_grad(); });
  if (g_grad_enabled && any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

Tensor zeros_like(const Tensor& t) { return Tensor::matrix(t.rows(), t.cols()); }

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out = Tensor::matrix(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out = Tensor::matrix(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* brow = b.data().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Var ones_like(const Var& v) { return constant(Tensor::matrix(v.rows(), v.cols(), 1.0)); }

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var leaf(Tensor value, bool requires_grad) {
  if (value.rank() != 2) {
    value = Tensor::matrix(value.rows(), value.cols(), std::vector<double>(value.data().begin(), value.data().end()));
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_node(map_binary(a.value(), b.value(), [](double x, double y) { return x + y; }),
                   {a, b}, [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_node(map_binary(a.value(), b.value(), [](double x, double y) { return x - y; }),
                   {a, b},
                   [](const Var&, const Var& g) { return std::vector<Var>{g, scale(g, -1.0)}; });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_node(map_binary(a.value(), b.value(), [](double x, double y) { return x * y; }),
                   {a, b}, [](const Var& out, const Var& g) {
                     const Var& x = out.input(0);
                     const Var& y = out.input(1);
                     return std::vector<Var>{x.requires_grad() ? mul(g, y) : Var{},
                                             y.requires_grad() ? mul(g, x) : Var{}};
                   });
}

Var scale(const Var& a, double factor) {
  return make_node(map_unary(a.value(), [factor](double x) { return factor * x; }), {a},
                   [factor](const Var&, const Var& g) { return std::vector<Var>{scale(g, factor)}; });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  return make_node(matmul_values(a.value(), b.value()), {a, b}, [](const Var& out, const Var& g) {
    const Var& x = out.input(0);
    const Var& y = out.input(1);
    Var gx = x.requires_grad() ? matmul(g, transpose(y)) : Var{};
    Var gy = y.requires_grad() ? matmul(transpose(x), g) : Var{};
    return std::vector<Var>{gx, gy};
  });
}

Var transpose(const Var& a) {
  const Tensor& v = a.value();
  Tensor out = Tensor::matrix(v.cols(), v.rows());
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) out(j, i) = v(i, j);
  return make_node(std::move(out), {a},
                   [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var expand_rows(const Var& row, std::size_t n) {
  if (row.rows() != 1) throw DimensionError("expand_rows: expects a single row");
  const std::size_t m = row.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = row.value()(0, j);
  return make_node(std::move(out), {row},
                   [](const Var&, const Var& g) { return std::vector<Var>{sum_rows(g)}; });
}

Var expand_cols(const Var& col, std::size_t m) {
  if (col.cols() != 1) throw DimensionError("expand_cols: expects a single column");
  const std::size_t n = col.rows();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = col.value()(i, 0);
  return make_node(std::move(out), {col},
                   [](const Var&, const Var& g) { return std::vector<Var>{sum_cols(g)}; });
}

Var sum_rows(const Var& a) {
  const Tensor& v = a.value();
  Tensor out = Tensor::matrix(1, v.cols());
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) out(0, j) += v(i, j);
  const std::size_t n = v.rows();
  return make_node(std::move(out), {a},
                   [n](const Var&, const Var& g) { return std::vector<Var>{expand_rows(g, n)}; });
}

Var sum_cols(const Var& a) {
  const Tensor& v = a.value();
  Tensor out = Tensor::matrix(v.rows(), 1);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) s += v(i, j);
    out(i, 0) = s;
  }
  const std::size_t m = v.cols();
  return make_node(std::move(out), {a},
                   [m](const Var&, const Var& g) { return std::vector<Var>{expand_cols(g, m)}; });
}

Var sum_all(const Var& a) { return sum_rows(sum_cols(a)); }

Var exp(const Var& a) {
  return make_node(map_unary(a.value(), [](double x) { return std::exp(x); }), {a},
                   [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, out)}; });
}

Var relu(const Var& a) {
  Tensor mask = map_unary(a.value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
  Tensor value = map_unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return make_node(std::move(value), {a}, [mask = std::move(mask)](const Var&, const Var& g) {
    return std::vector<Var>{mul(g, constant(mask))};
  });
}

Var sigmoid(const Var& a) {
  Tensor value = map_unary(a.value(), [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_node(std::move(value), {a}, [](const Var& out, const Var& g) {
    return std::vector<Var>{mul(g, mul(out, sub(ones_like(out), out)))};
  });
}

Var tanh(const Var& a) {
  return make_node(map_unary(a.value(), [](double x) { return std::tanh(x); }), {a},
                   [](const Var& out, const Var& g) {
                     return std::vector<Var>{mul(g, sub(ones_like(out), mul(out, out)))};
                   });
}

Var logsumexp_cols(const Var& a) {
  const Tensor& v = a.value();
  Tensor out = Tensor::matrix(v.rows(), 1);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < v.cols(); ++j) mx = std::max(mx, v(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) s += std::exp(v(i, j) - mx);
    out(i, 0) = mx + std::log(s);
  }
  return make_node(std::move(out), {a}, [](const Var& out, const Var& g) {
    const Var& x = out.input(0);
    const std::size_t m = x.cols();
    Var softmax = exp(sub(x, expand_cols(out, m)));
    return std::vector<Var>{mul(expand_cols(g, m), softmax)};
  });
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw DimensionError("grad: output must be a 1x1 scalar");
  }

  // Post-order DFS over the nodes that carry gradients.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, Var> handle;
  if (output.requires_grad()) {
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Var, std::size_t>> stack;
    stack.emplace_back(output, 0);
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [var, next] = stack.back();
      const auto& ins = var.inputs();
      if (next < ins.size()) {
        const Var& child = ins[next++];
        if (child.requires_grad() && visited.insert(child.node()).second) {
          stack.emplace_back(child, 0);
        }
        continue;
      }
      order.push_back(var.node());
      handle.emplace(var.node(), var);
      stack.pop_back();
    }
  }

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::unordered_map<const Node*, Var> grads;
  grads.emplace(output.node(), constant(Tensor::scalar(1.0)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    const Var& out = handle.at(node);
    std::vector<Var> input_grads = node->backward(out, found->second);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Var& in = node->inputs[i];
      if (!in.requires_grad() || !input_grads[i].valid()) continue;
      auto [slot, inserted] = grads.try_emplace(in.node(), input_grads[i]);
      if (!inserted) slot->second = add(slot->second, input_grads[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto found = grads.find(w.node());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else {
      result.push_back(constant(zeros_like(w.value())));
    }
  }
  return result;
}

}  // namespace trainscope::ad
