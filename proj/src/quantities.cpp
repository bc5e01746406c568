// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/quantities.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "kernels.hpp"
#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

using kernels::squared_norm;

void require_sample_grads(const BatchObservables& obs, const char* what) {
  if (!obs.has_sample_grads()) {
    throw DomainError(std::string(what) + ": needs per-sample gradients");
  }
}

void require_pairs(const BatchObservables& obs, const char* what) {
  require_sample_grads(obs, what);
  if (obs.batch_size() < 2) throw DomainError(std::string(what) + ": batch too small (|B| < 2)");
}

// Per-coordinate sum over samples of g_n,j^2.
std::vector<double> second_moment_sums(const BatchObservables& obs) {
  std::vector<double> s(obs.dim(), 0.0);
  for (std::size_t n = 0; n < obs.batch_size(); ++n) {
    auto g = obs.sample_grad(n);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += g[j] * g[j];
  }
  return s;
}

// Per-coordinate sum over samples of (g_n,j - g_B,j)^2.
std::vector<double> centered_sums(const BatchObservables& obs) {
  std::vector<double> s(obs.dim(), 0.0);
  for (std::size_t n = 0; n < obs.batch_size(); ++n) {
    auto g = obs.sample_grad(n);
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double d = g[j] - obs.batch_grad[j];
      s[j] += d * d;
    }
  }
  return s;
}

Hist2d hist2d_over(std::span<const double> params, const BatchObservables& obs, std::size_t offset,
                   std::size_t length, const Hist2dOptions& options) {
  const auto slice = params.subspan(offset, length);
  BinRange x = options.x_range ? BinRange{options.x_range->first, options.x_range->second, options.x_bins}
                               : adaptive_range(slice, options.x_bins);
  x.validate();
  options.y.validate();
  if (x.bins > BinRange::kMaxBins / options.y.bins) throw ConfigError("2-D histogram: too many bins");
  Hist2d h{x.edges(), options.y.edges(), std::vector<std::int64_t>(x.bins * options.y.bins, 0)};
  std::vector<std::int32_t> x_index(length), y_index(length);
  bin_indices(slice, x, x_index);
  for (auto& i : x_index) i *= static_cast<std::int32_t>(options.y.bins);
  for (std::size_t n = 0; n < obs.batch_size(); ++n) {
    bin_indices(obs.sample_grad(n).subspan(offset, length), options.y, y_index);
    for (std::size_t j = 0; j < length; ++j) ++h.counts[static_cast<std::size_t>(x_index[j] + y_index[j])];
  }
  return h;
}

}  // namespace

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("distance: vectors differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Displacement displacement_metrics(std::span<const double> theta_init, const StepTransition& t) {
  return Displacement{l2_distance(t.theta_after.values, theta_init),
                      l2_distance(t.theta_after.values, t.theta_before.values)};
}

double grad_norm(const BatchObservables& obs) { return std::sqrt(squared_norm(obs.batch_grad)); }

std::vector<double> grad_norm_layers(const BatchObservables& obs) {
  std::vector<double> out;
  const std::span<const double> g = obs.batch_grad;
  for (const auto& layer : obs.layout.layers()) {
    out.push_back(std::sqrt(squared_norm(g.subspan(layer.offset, layer.length))));
  }
  return out;
}

GradientTestResult gradient_tests(const BatchObservables& obs, double eps) {
  require_pairs(obs, "gradient tests");
  const double gb2 = squared_norm(obs.batch_grad);
  if (std::sqrt(gb2) <= eps) throw DomainError("gradient tests: mini-batch gradient is zero");
  const double b = static_cast<double>(obs.batch_size());
  double norms = 0.0, inner = 0.0, ortho = 0.0;
  for (std::size_t n = 0; n < obs.batch_size(); ++n) {
    auto g = obs.sample_grad(n);
    const double coeff = kernels::dot(g, obs.batch_grad) / gb2;
    // centered forms; sum of coeff is exactly b, so these equal sum(x^2) - b
    norms += kernels::residual_squared(g, 1.0, obs.batch_grad) / gb2;
    inner += (coeff - 1.0) * (coeff - 1.0);
    // residual after projecting onto g_B, formed explicitly to avoid cancellation
    ortho += kernels::residual_squared(g, coeff, obs.batch_grad) / gb2;
  }
  const double denom = b * (b - 1.0);
  return GradientTestResult{std::sqrt(std::max(0.0, norms / denom)),
                            std::sqrt(std::max(0.0, inner / denom)),
                            std::sqrt(std::max(0.0, ortho / denom))};
}

Hist1d grad_hist_1d(const BatchObservables& obs, const BinRange& range) {
  require_sample_grads(obs, "gradient histogram");
  return histogram_1d(obs.sample_grads.data(), range);
}

std::vector<Hist1d> grad_hist_1d_layers(const BatchObservables& obs, const BinRange& range) {
  require_sample_grads(obs, "gradient histogram");
  range.validate();
  std::vector<Hist1d> out;
  for (const auto& layer : obs.layout.layers()) {
    Hist1d h{range.edges(), std::vector<std::int64_t>(range.bins, 0)};
    for (std::size_t n = 0; n < obs.batch_size(); ++n) {
      accumulate_histogram(obs.sample_grad(n).subspan(layer.offset, layer.length), range, h.counts);
    }
    out.push_back(std::move(h));
  }
  return out;
}

Hist2d grad_hist_2d(std::span<const double> params, const BatchObservables& obs,
                    const Hist2dOptions& options) {
  require_sample_grads(obs, "gradient histogram");
  if (params.size() != obs.dim()) throw DimensionError("gradient histogram: parameter length mismatch");
  return hist2d_over(params, obs, 0, params.size(), options);
}

std::vector<Hist2d> grad_hist_2d_layers(std::span<const double> params, const BatchObservables& obs,
                                        const Hist2dOptions& options) {
  require_sample_grads(obs, "gradient histogram");
  if (params.size() != obs.dim()) throw DimensionError("gradient histogram: parameter length mismatch");
  std::vector<Hist2d> out;
  for (const auto& layer : obs.layout.layers()) {
    out.push_back(hist2d_over(params, obs, layer.offset, layer.length, options));
  }
  return out;
}

double hess_trace(const CurvatureProbe& probe) { return probe.trace(); }

std::vector<double> hess_trace_layers(const CurvatureProbe& probe) {
  const auto& d = probe.diag();
  std::vector<double> out;
  for (const auto& layer : probe.layout().layers()) {
    double s = 0.0;
    for (std::size_t j = 0; j < layer.length; ++j) s += d[layer.offset + j];
    out.push_back(s);
  }
  return out;
}

PowerIterationResult hess_max_ev(const CurvatureProbe& probe, const PowerIterationOptions& options) {
  const std::size_t dim = probe.dim();
  if (dim == 0) throw DimensionError("hessian eigenvalue: empty parameter vector");
  if (options.max_iters == 0) throw ConfigError("hessian eigenvalue: max_iters must be >= 1");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = normal(rng);
    norm = std::sqrt(squared_norm(v));
  }
  for (double& x : v) x /= norm;

  PowerIterationResult result;
  double previous = 0.0;
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    std::vector<double> w = probe.hvp(v);
    double lambda = 0.0;
    for (std::size_t j = 0; j < dim; ++j) lambda += v[j] * w[j];
    result.value = lambda;
    result.iterations = it + 1;
    const double wnorm = std::sqrt(squared_norm(w));
    if (wnorm == 0.0) {
      result.converged = true;
      return result;
    }
    if (it > 0 && std::abs(lambda - previous) < options.rtol * std::abs(lambda) + options.atol) {
      result.converged = true;
      return result;
    }
    previous = lambda;
    for (std::size_t j = 0; j < dim; ++j) v[j] = w[j] / wnorm;
  }
  return result;
}

GuardedValue tic(const CurvatureProbe& probe, const BatchObservables& obs, TicVariant variant) {
  require_sample_grads(obs, "TIC");
  if (probe.dim() != obs.dim()) throw DimensionError("TIC: probe and observables differ in D");
  const double b = static_cast<double>(obs.batch_size());
  GuardedValue out;
  if (variant == TicVariant::kTrace) {
    double sum = 0.0;
    for (std::size_t n = 0; n < obs.batch_size(); ++n) sum += squared_norm(obs.sample_grad(n));
    double tr = probe.trace();
    if (std::abs(tr) <= kGuardEpsilon) {
      tr = std::copysign(kGuardEpsilon, tr);
      out.saturated = true;
    }
    out.value = sum / b / tr;
    return out;
  }
  const auto& diag = probe.diag();
  const auto moments = second_moment_sums(obs);
  double sum = 0.0;
  for (std::size_t j = 0; j < diag.size(); ++j) {
    double h = diag[j];
    if (std::abs(h) <= kGuardEpsilon) {
      h = std::copysign(kGuardEpsilon, h);
      out.saturated = true;
    }
    sum += moments[j] / h;
  }
  out.value = sum / b;
  return out;
}

GuardedValue mean_gsnr(const BatchObservables& obs) {
  require_pairs(obs, "GSNR");
  const double b = static_cast<double>(obs.batch_size());
  const auto scatter = centered_sums(obs);
  GuardedValue out;
  double sum = 0.0;
  for (std::size_t j = 0; j < obs.dim(); ++j) {
    const double mean_sq = obs.batch_grad[j] * obs.batch_grad[j];
    const double var = scatter[j] / b;
    if (var <= kGuardEpsilon) out.saturated = true;
    sum += mean_sq / (var + kGuardEpsilon);
  }
  out.value = sum / static_cast<double>(obs.dim());
  return out;
}

double cabs_batch_size(const BatchObservables& obs, double learning_rate) {
  require_sample_grads(obs, "CABS");
  if (obs.batch_loss <= kGuardEpsilon) throw DomainError("CABS: mini-batch loss is not positive");
  double scatter = 0.0;
  for (double s : centered_sums(obs)) scatter += s;
  return learning_rate * scatter / static_cast<double>(obs.batch_size()) / obs.batch_loss;
}

GuardedValue early_stopping_criterion(const BatchObservables& obs) {
  require_pairs(obs, "early stopping");
  const double b = static_cast<double>(obs.batch_size());
  const auto scatter = centered_sums(obs);
  GuardedValue out;
  double sum = 0.0;
  for (std::size_t j = 0; j < obs.dim(); ++j) {
    const double mean_sq = obs.batch_grad[j] * obs.batch_grad[j];
    if (scatter[j] <= kGuardEpsilon) out.saturated = true;
    sum += mean_sq / (scatter[j] + kGuardEpsilon);
  }
  out.value = 1.0 - b * (b - 1.0) / static_cast<double>(obs.dim()) * sum;
  return out;
}

bool QuantityValue::has_flag(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

}  // namespace trainscope
