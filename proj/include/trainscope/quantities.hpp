// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Instrument quantities. Every function here is pure: it reads observables and
// curvature probes and returns a value, so instruments may run concurrently on
// shared inputs.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trainscope/histogram.hpp"
#include "trainscope/model.hpp"
#include "trainscope/observables.hpp"

namespace trainscope {

inline constexpr double kGuardEpsilon = 1e-12;

struct StepTransition {
  ParamVector theta_before;
  ParamVector theta_after;
  BatchObservables obs_before;
  BatchObservables obs_after;
  std::vector<double> update;
  double learning_rate = 0.0;

  /// Fills `update` with after - before; throws DimensionError on length mismatch.
  static StepTransition make(ParamVector before, ParamVector after, BatchObservables obs_before,
                             BatchObservables obs_after, double learning_rate);
};

/// Noisy quadratic fit along the update direction.
///
/// Observation order is (loss at 0, loss at |s|, slope at 0, slope at |s|);
/// slopes are directional derivatives per unit length along s.
struct AlphaFit {
  std::array<double, 2> positions{};
  std::array<double, 4> observations{};
  std::array<double, 4> variances{};
  std::array<std::array<double, 4>, 3> design{};
  std::array<double, 3> w{};
  double alpha = 0.0;
  double alpha_raw = 0.0;
  bool fallback = false;  // no parabola minimum (w2 <= 1e-12)
  bool damped = false;    // weighted system was near rank deficient
};

inline constexpr double kAlphaClamp = 2.0;

/// Weighted least-squares fit from explicit observations. `variances` are the
/// noise estimates of the four observations; `guard` is added before inverting.
AlphaFit fit_alpha_from_observations(double step_length, const std::array<double, 4>& observations,
                                     const std::array<double, 4>& variances,
                                     double guard = kGuardEpsilon);

/// Requires per-sample gradients on both sides of the step and |s| > 0.
/// Noise levels are (population variance + 1e-12) / |B|.
AlphaFit fit_alpha(const StepTransition& t);

/// Same fit without building a StepTransition; `update` is after - before.
/// Observables carrying `sample_projections` (taken along `update`) may omit
/// the per-sample matrix.
AlphaFit fit_alpha(std::span<const double> update, const BatchObservables& before,
                   const BatchObservables& after);

struct Displacement {
  double distance = 0.0;
  double update_size = 0.0;
};

double l2_distance(std::span<const double> a, std::span<const double> b);

Displacement displacement_metrics(std::span<const double> theta_init, const StepTransition& t);

double grad_norm(const BatchObservables& obs);
/// One entry per layer of the parameter layout.
std::vector<double> grad_norm_layers(const BatchObservables& obs);

struct GradientTestResult {
  double theta_norm = 0.0;
  double theta_inner = 0.0;
  double nu_ortho = 0.0;
};

GradientTestResult gradient_tests(const BatchObservables& obs, double eps = kGuardEpsilon);

Hist1d grad_hist_1d(const BatchObservables& obs, const BinRange& range = {});
std::vector<Hist1d> grad_hist_1d_layers(const BatchObservables& obs, const BinRange& range = {});

struct Hist2dOptions {
  std::size_t x_bins = 50;
  std::optional<std::pair<double, double>> x_range;  // adaptive when empty
  BinRange y = {};
};

/// Joint histogram of (theta_j, g_n,j) over all samples and coordinates.
Hist2d grad_hist_2d(std::span<const double> params, const BatchObservables& obs,
                    const Hist2dOptions& options = {});
std::vector<Hist2d> grad_hist_2d_layers(std::span<const double> params, const BatchObservables& obs,
                                        const Hist2dOptions& options = {});

double hess_trace(const CurvatureProbe& probe);
std::vector<double> hess_trace_layers(const CurvatureProbe& probe);

struct PowerIterationOptions {
  std::size_t max_iters = 100;
  double rtol = 1e-3;
  double atol = 1e-6;
  std::uint64_t seed = 0;
};

struct PowerIterationResult {
  double value = 0.0;  // signed Rayleigh quotient
  std::size_t iterations = 0;
  bool converged = false;
};

/// Dominant-magnitude eigenvalue of the batch Hessian by power iteration.
PowerIterationResult hess_max_ev(const CurvatureProbe& probe, const PowerIterationOptions& options = {});

/// Scalar with a flag telling whether an epsilon guard changed a denominator.
struct GuardedValue {
  double value = 0.0;
  bool saturated = false;
};

enum class TicVariant { kDiag, kTrace };

GuardedValue tic(const CurvatureProbe& probe, const BatchObservables& obs, TicVariant variant);

GuardedValue mean_gsnr(const BatchObservables& obs);

double cabs_batch_size(const BatchObservables& obs, double learning_rate);

GuardedValue early_stopping_criterion(const BatchObservables& obs);

using QuantityData = std::variant<double, std::vector<double>, Hist1d, Hist2d>;

struct QuantityValue {
  QuantityData data;
  std::vector<std::string> flags;
  std::map<std::string, double> meta;

  bool is_scalar() const { return std::holds_alternative<double>(data); }
  double scalar() const { return std::get<double>(data); }
  bool has_flag(const std::string& flag) const;

  friend bool operator==(const QuantityValue&, const QuantityValue&) = default;
};

}  // namespace trainscope
