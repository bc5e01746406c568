// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/observables.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "kernels.hpp"
#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

void flatten_into(const ad::Var& g, const ParamBlock& block, std::vector<double>& out) {
  auto src = g.value().data();
  for (std::size_t i = 0; i < block.length; ++i) out[block.offset + i] = src[i];
}

BatchObservables evaluate(const Objective& objective, std::span<const double> params,
                          const Batch& batch, bool per_sample, Tensor storage = {},
                          std::optional<std::span<const double>> direction = std::nullopt) {
  LossGraph graph = objective.trace(params, batch, /*with_grad=*/true);
  const std::size_t n = batch.size();
  const ParamLayout& layout = objective.layout();
  const auto& blocks = layout.blocks();

  BatchObservables obs;
  obs.layout = layout;
  obs.sample_losses.assign(graph.sample_losses.value().data().begin(),
                           graph.sample_losses.value().data().end());
  double total = 0.0;
  for (double l : obs.sample_losses) total += l;
  obs.batch_loss = total / static_cast<double>(n);

  if (direction && direction->size() != layout.dim()) {
    throw DimensionError("projection direction has length " + std::to_string(direction->size()) +
                         ", expected " + std::to_string(layout.dim()));
  }
  std::vector<ad::Var> wrt = graph.leaves;
  if (per_sample || direction) {
    for (const auto& rule : graph.rules) wrt.push_back(rule.node);
  }
  std::vector<ad::Var> grads = ad::grad(ad::sum_all(graph.sample_losses), wrt);

  const double inv_n = 1.0 / static_cast<double>(n);
  obs.batch_grad.assign(layout.dim(), 0.0);
  for (std::size_t b = 0; b < blocks.size(); ++b) flatten_into(grads[b], blocks[b], obs.batch_grad);
  for (double& g : obs.batch_grad) g *= inv_n;

  if (per_sample) {
    if (storage.rank() == 2 && storage.rows() == n && storage.cols() == layout.dim()) {
      std::fill(storage.data().begin(), storage.data().end(), 0.0);
      obs.sample_grads = std::move(storage);
    } else {
      obs.sample_grads = Tensor::matrix(n, layout.dim());
    }
    for (std::size_t r = 0; r < graph.rules.size(); ++r) {
      const PerSampleRule& rule = graph.rules[r];
      const ParamBlock& block = blocks[rule.block];
      const Tensor& dz = grads[blocks.size() + r].value();
      const std::size_t out = dz.cols();
      if (rule.kind == PerSampleRule::Kind::kRows) {
        for (std::size_t s = 0; s < n; ++s) {
          const double* dz_row = dz.data().data() + s * out;
          std::copy(dz_row, dz_row + block.length, &obs.sample_grads(s, block.offset));
        }
      } else {
        const Tensor& a = rule.input;
        const std::size_t in = a.cols();
        for (std::size_t s = 0; s < n; ++s) {
          double* row = &obs.sample_grads(s, block.offset);
          const double* dz_row = dz.data().data() + s * out;
          for (std::size_t i = 0; i < in; ++i) {
            const double ai = a(s, i);
            for (std::size_t j = 0; j < out; ++j) row[i * out + j] = ai * dz_row[j];
          }
        }
      }
    }
  }
  if (direction) {
    const std::span<const double> d = *direction;
    obs.sample_projections.assign(n, 0.0);
    for (std::size_t r = 0; r < graph.rules.size(); ++r) {
      const PerSampleRule& rule = graph.rules[r];
      const ParamBlock& block = blocks[rule.block];
      const Tensor& dz = grads[blocks.size() + r].value();
      const std::size_t out = dz.cols();
      for (std::size_t s = 0; s < n; ++s) {
        const std::span<const double> dz_row = dz.row_view(s);
        if (rule.kind == PerSampleRule::Kind::kRows) {
          obs.sample_projections[s] += kernels::dot(dz_row, d.subspan(block.offset, block.length));
        } else {
          // (a_s outer dz_s) . D = a_s^T D dz_s
          const Tensor& a = rule.input;
          double acc = 0.0;
          for (std::size_t i = 0; i < a.cols(); ++i) {
            acc += a(s, i) * kernels::dot(d.subspan(block.offset + i * out, out), dz_row);
          }
          obs.sample_projections[s] += acc;
        }
      }
    }
  }
  return obs;
}

struct GraphState {
  LossGraph graph;
  std::vector<ad::Var> grads;
  ParamLayout layout;
};

}  // namespace

ForwardResult forward_batch(const Objective& objective, std::span<const double> params,
                            const Batch& batch) {
  ad::NoGradGuard guard;
  LossGraph graph = objective.trace(params, batch, /*with_grad=*/false);
  ForwardResult out;
  out.sample_losses.assign(graph.sample_losses.value().data().begin(),
                           graph.sample_losses.value().data().end());
  double total = 0.0;
  for (double l : out.sample_losses) total += l;
  out.batch_loss = total / static_cast<double>(out.sample_losses.size());
  return out;
}

BatchObservables backward_batch(const Objective& objective, std::span<const double> params,
                                const Batch& batch) {
  return evaluate(objective, params, batch, false);
}

BatchObservables backward_per_sample(const Objective& objective, std::span<const double> params,
                                     const Batch& batch) {
  return evaluate(objective, params, batch, true);
}

BatchObservables backward_per_sample(const Objective& objective, std::span<const double> params,
                                     const Batch& batch, BatchObservables&& recycled) {
  return evaluate(objective, params, batch, true, std::move(recycled.sample_grads));
}

BatchObservables backward_projected(const Objective& objective, std::span<const double> params,
                                    const Batch& batch, std::span<const double> direction,
                                    bool keep_sample_grads, BatchObservables&& recycled) {
  return evaluate(objective, params, batch, keep_sample_grads, std::move(recycled.sample_grads), direction);
}

struct CurvatureProbe::Cache {
  std::once_flag once;
  std::vector<double> diag;
};

CurvatureProbe::CurvatureProbe(std::size_t dim, HvpFn hvp, ParamLayout layout,
                               CurvatureOptions options)
    : dim_(dim),
      hvp_(std::move(hvp)),
      layout_(std::move(layout)),
      options_(options),
      cache_(std::make_shared<Cache>()) {
  if (layout_.dim() == 0) layout_.append("theta", 0, {dim_});
  if (layout_.dim() != dim_) throw DimensionError("curvature probe: layout does not cover D");
}

CurvatureProbe CurvatureProbe::from_matrix(const Tensor& matrix, CurvatureOptions options) {
  if (matrix.rows() != matrix.cols()) throw DimensionError("curvature probe: matrix not square");
  const std::size_t d = matrix.rows();
  return CurvatureProbe(
      d,
      [matrix, d](std::span<const double> v) {
        std::vector<double> out(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) s += matrix(i, j) * v[j];
          out[i] = s;
        }
        return out;
      },
      {}, options);
}

std::vector<double> CurvatureProbe::hvp(std::span<const double> v) const {
  if (v.size() != dim_) {
    throw DimensionError("hvp: vector has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(dim_));
  }
  return hvp_(v);
}

const std::vector<double>& CurvatureProbe::diag() const {
  std::call_once(cache_->once, [this] {
    std::vector<double> d(dim_, 0.0);
    if (options_.mode == DiagMode::kExact) {
      if (dim_ > options_.diag_cap) {
        throw CapacityError("hessian diagonal: D = " + std::to_string(dim_) +
                            " exceeds the cap of " + std::to_string(options_.diag_cap) +
                            "; use the Monte Carlo estimator (mc:<samples>) or raise the cap");
      }
      std::vector<double> e(dim_, 0.0);
      for (std::size_t j = 0; j < dim_; ++j) {
        e[j] = 1.0;
        d[j] = hvp_(e)[j];
        e[j] = 0.0;
      }
    } else {
      if (options_.mc_samples == 0) throw ConfigError("hessian diagonal: mc_samples must be >= 1");
      std::mt19937_64 rng(options_.seed);
      std::bernoulli_distribution coin(0.5);
      std::vector<double> z(dim_);
      for (std::size_t s = 0; s < options_.mc_samples; ++s) {
        for (double& zi : z) zi = coin(rng) ? 1.0 : -1.0;
        std::vector<double> hz = hvp_(z);
        for (std::size_t j = 0; j < dim_; ++j) d[j] += z[j] * hz[j];
      }
      for (double& x : d) x /= static_cast<double>(options_.mc_samples);
    }
    cache_->diag = std::move(d);
  });
  return cache_->diag;
}

double CurvatureProbe::trace() const {
  double t = 0.0;
  for (double x : diag()) t += x;
  return t;
}

CurvatureProbe make_curvature_probe(const Objective& objective, std::span<const double> params,
                                    const Batch& batch, CurvatureOptions options) {
  auto state = std::make_shared<GraphState>();
  state->graph = objective.trace(params, batch, /*with_grad=*/true);
  state->layout = objective.layout();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  ad::Var loss = ad::scale(ad::sum_all(state->graph.sample_losses), inv_n);
  state->grads = ad::grad(loss, state->graph.leaves, /*create_graph=*/true);

  const std::size_t dim = state->layout.dim();
  auto hvp = [state, dim](std::span<const double> v) {
    const auto& blocks = state->layout.blocks();
    ad::Var inner;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const ad::Var& g = state->grads[b];
      auto slice = v.subspan(blocks[b].offset, blocks[b].length);
      ad::Var direction = ad::constant(
          Tensor::matrix(g.rows(), g.cols(), std::vector<double>(slice.begin(), slice.end())));
      ad::Var term = ad::sum_all(ad::mul(g, direction));
      inner = inner.valid() ? ad::add(inner, term) : term;
    }
    std::vector<double> out(dim, 0.0);
    if (!inner.requires_grad()) return out;  // loss is linear in the parameters
    std::vector<ad::Var> hv = ad::grad(inner, state->graph.leaves);
    for (std::size_t b = 0; b < blocks.size(); ++b) flatten_into(hv[b], blocks[b], out);
    return out;
  };
  return CurvatureProbe(dim, std::move(hvp), state->layout, options);
}

std::vector<double> hessian_vector_product(const Objective& objective,
                                           std::span<const double> params, const Batch& batch,
                                           std::span<const double> v) {
  if (v.size() != objective.dim()) {
    throw DimensionError("hvp: vector has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(objective.dim()));
  }
  return make_curvature_probe(objective, params, batch).hvp(v);
}

std::vector<double> hessian_diagonal(const Objective& objective, std::span<const double> params,
                                     const Batch& batch, std::size_t cap) {
  if (objective.dim() > cap) {
    throw CapacityError("hessian diagonal: D = " + std::to_string(objective.dim()) +
                        " exceeds the cap of " + std::to_string(cap) +
                        "; use the Monte Carlo estimator or raise the cap");
  }
  CurvatureOptions options;
  options.diag_cap = cap;
  return make_curvature_probe(objective, params, batch, options).diag();
}

Tensor dense_hessian_reference(const Objective& objective, std::span<const double> params,
                               const Batch& batch, double step, std::size_t cap) {
  const std::size_t d = objective.dim();
  if (d > cap) {
    throw CapacityError("dense hessian reference: D = " + std::to_string(d) + " exceeds " +
                        std::to_string(cap));
  }
  Tensor h = Tensor::matrix(d, d);
  std::vector<double> shifted(params.begin(), params.end());
  for (std::size_t j = 0; j < d; ++j) {
    const double original = shifted[j];
    shifted[j] = original + step;
    const auto plus = backward_batch(objective, shifted, batch).batch_grad;
    shifted[j] = original - step;
    const auto minus = backward_batch(objective, shifted, batch).batch_grad;
    shifted[j] = original;
    for (std::size_t i = 0; i < d; ++i) h(i, j) = (plus[i] - minus[i]) / (2.0 * step);
  }
  return h;
}

}  // namespace trainscope
