// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "trainscope/errors.hpp"
#include "trainscope/quantities.hpp"

namespace trainscope {
namespace {

constexpr double kCurvatureFloor = 1e-12;
constexpr double kRankRatio = 1e-6;  // |R_kk| relative to max |R_ii|
constexpr double kDamping = 1e-10;

// Least squares min |A x - b| for up to 7 rows and 3 columns via Householder
// QR. Returns false when R is numerically rank deficient.
bool least_squares(std::vector<std::array<double, 3>> a, std::vector<double> b,
                   std::array<double, 3>& x) {
  const std::size_t m = a.size();
  for (std::size_t k = 0; k < 3; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += a[i][k] * a[i][k];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a[k][k] > 0 ? -norm : norm;
    std::vector<double> v(m, 0.0);
    for (std::size_t i = k; i < m; ++i) v[i] = a[i][k];
    v[k] -= alpha;
    double vv = 0.0;
    for (std::size_t i = k; i < m; ++i) vv += v[i] * v[i];
    if (vv == 0.0) continue;
    for (std::size_t c = k; c < 3; ++c) {
      double d = 0.0;
      for (std::size_t i = k; i < m; ++i) d += v[i] * a[i][c];
      for (std::size_t i = k; i < m; ++i) a[i][c] -= 2.0 * d / vv * v[i];
    }
    double d = 0.0;
    for (std::size_t i = k; i < m; ++i) d += v[i] * b[i];
    for (std::size_t i = k; i < m; ++i) b[i] -= 2.0 * d / vv * v[i];
  }
  const double scale = std::max({std::abs(a[0][0]), std::abs(a[1][1]), std::abs(a[2][2])});
  for (int k = 0; k < 3; ++k) {
    if (!(std::abs(a[k][k]) > kRankRatio * scale)) return false;
  }
  for (int i = 2; i >= 0; --i) {
    double s = b[i];
    for (int c = i + 1; c < 3; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return true;
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // population convention
};

MeanVar mean_var(std::span<const double> xs) {
  MeanVar mv;
  for (double x : xs) mv.mean += x;
  mv.mean /= static_cast<double>(xs.size());
  for (double x : xs) mv.var += (x - mv.mean) * (x - mv.mean);
  mv.var /= static_cast<double>(xs.size());
  return mv;
}

}  // namespace

StepTransition StepTransition::make(ParamVector before, ParamVector after,
                                    BatchObservables obs_before, BatchObservables obs_after,
                                    double learning_rate) {
  if (before.values.size() != after.values.size()) {
    throw DimensionError("step transition: parameter vectors differ in length");
  }
  StepTransition t;
  t.update.resize(before.values.size());
  for (std::size_t i = 0; i < t.update.size(); ++i) t.update[i] = after.values[i] - before.values[i];
  t.theta_before = std::move(before);
  t.theta_after = std::move(after);
  t.obs_before = std::move(obs_before);
  t.obs_after = std::move(obs_after);
  t.learning_rate = learning_rate;
  return t;
}

AlphaFit fit_alpha_from_observations(double step_length, const std::array<double, 4>& observations,
                                     const std::array<double, 4>& variances, double guard) {
  if (!(step_length > 0.0) || !std::isfinite(step_length)) {
    throw DomainError("alpha: degenerate step (update has zero length)");
  }
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(observations[i]) || !std::isfinite(variances[i])) {
      throw NumericError("alpha: non-finite observation");
    }
  }
  const double len = step_length;
  AlphaFit fit;
  fit.positions = {0.0, len};
  fit.observations = observations;
  fit.variances = variances;
  fit.design = {{{1.0, 1.0, 0.0, 0.0}, {0.0, len, 1.0, 1.0}, {0.0, len * len, 0.0, 2.0 * len}}};

  // Solve in u = tau / |s| so that the system stays well scaled. Slopes
  // in u are |s| times slopes in tau, with variances scaled by |s|^2.
  static constexpr double phi_u[4][3] = {{1, 0, 0}, {1, 1, 1}, {0, 1, 0}, {0, 1, 2}};
  std::array<double, 4> y{}, weight{};
  for (int i = 0; i < 4; ++i) {
    const double lambda = std::max(variances[i], 0.0) + guard;
    if (!(lambda > 0.0)) throw DomainError("alpha: observation variance must be positive");
    const bool slope = i >= 2;
    y[i] = slope ? len * observations[i] : observations[i];
    weight[i] = slope ? 1.0 / (len * len * lambda) : 1.0 / lambda;
  }
  const double wmax = *std::max_element(weight.begin(), weight.end());
  std::vector<std::array<double, 3>> rows;
  std::vector<double> rhs;
  for (int i = 0; i < 4; ++i) {
    const double r = std::sqrt(weight[i] / wmax);
    rows.push_back({r * phi_u[i][0], r * phi_u[i][1], r * phi_u[i][2]});
    rhs.push_back(r * y[i]);
  }
  std::array<double, 3> v{};
  if (!least_squares(rows, rhs, v)) {
    // Tikhonov rows sqrt(lambda) I with lambda relative to the normal matrix trace
    double trace = 0.0;
    for (const auto& row : rows) trace += row[0] * row[0] + row[1] * row[1] + row[2] * row[2];
    const double root = std::sqrt(kDamping * trace / 3.0);
    for (int k = 0; k < 3; ++k) {
      std::array<double, 3> row{};
      row[k] = root;
      rows.push_back(row);
      rhs.push_back(0.0);
    }
    if (!least_squares(rows, rhs, v)) throw NumericError("alpha: least-squares system is singular");
    fit.damped = true;
  }
  fit.w = {v[0], v[1] / len, v[2] / (len * len)};

  const double w1 = fit.w[1], w2 = fit.w[2];
  if (w2 > kCurvatureFloor) {
    // tau* = -w1 / (2 w2), alpha = |s| / tau* - 1
    fit.alpha_raw = w1 == 0.0 ? INFINITY : -2.0 * w2 * len / w1 - 1.0;
  } else {
    fit.fallback = true;
    const double end_slope = w1 + 2.0 * w2 * len;
    fit.alpha_raw = end_slope < 0.0 ? -1.0 : 1.0;
  }
  fit.alpha = std::clamp(fit.alpha_raw, -kAlphaClamp, kAlphaClamp);
  return fit;
}

AlphaFit fit_alpha(const StepTransition& t) { return fit_alpha(t.update, t.obs_before, t.obs_after); }

AlphaFit fit_alpha(std::span<const double> update, const BatchObservables& a, const BatchObservables& b) {
  auto projected = [](const BatchObservables& o) {
    return o.sample_projections.size() == o.batch_size() && o.batch_size() > 0;
  };
  if (!(a.has_sample_grads() || projected(a)) || !(b.has_sample_grads() || projected(b))) {
    throw DomainError("alpha: needs per-sample gradients before and after the step");
  }
  if (a.dim() != update.size() || b.dim() != update.size()) {
    throw DimensionError("alpha: observables do not match the update length");
  }
  double len = 0.0;
  for (double s : update) len += s * s;
  len = std::sqrt(len);
  if (len == 0.0) throw DomainError("alpha: degenerate step (update has zero length)");

  auto slopes = [&](const BatchObservables& obs) {
    std::vector<double> p(obs.batch_size());
    for (std::size_t n = 0; n < p.size(); ++n) {
      // projections onto the update itself, when present, stand in for the rows
      const double dot = projected(obs) ? obs.sample_projections[n] : kernels::dot(update, obs.sample_grad(n));
      p[n] = dot / len;
    }
    return mean_var(p);
  };
  const MeanVar l0 = mean_var(a.sample_losses);
  const MeanVar l1 = mean_var(b.sample_losses);
  const MeanVar s0 = slopes(a);
  const MeanVar s1 = slopes(b);
  const double na = static_cast<double>(a.batch_size());
  const double nb = static_cast<double>(b.batch_size());
  // guard the per-sample variance before dividing by |B| so that duplicating
  // every sample rescales all four noise levels alike
  const double e = kGuardEpsilon;
  return fit_alpha_from_observations(
      len, {a.batch_loss, b.batch_loss, s0.mean, s1.mean},
      {(l0.var + e) / na, (l1.var + e) / nb, (s0.var + e) / na, (s1.var + e) / nb}, 0.0);
}

}  // namespace trainscope
