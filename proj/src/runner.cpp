// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ULL;

const std::set<std::string> kNeedsSampleGrads = {
    instrument::kAlpha,     instrument::kNormTest, instrument::kInnerTest,
    instrument::kOrthoTest, instrument::kGradHist1d, instrument::kTicDiag,
    instrument::kTicTrace,  instrument::kEarlyStopping, instrument::kCabs,
    instrument::kMeanGsnr,  instrument::kGradHist2d};

const std::set<std::string> kNeedsCurvature = {instrument::kTicDiag, instrument::kTicTrace,
                                               instrument::kHessTrace, instrument::kHessMaxEv};

bool any_of(const TrackingConfig& config, const std::set<std::string>& names) {
  for (const auto& n : names) {
    if (config.has(n)) return true;
  }
  return false;
}

QuantityValue scalar(double v) { return QuantityValue{v, {}, {}}; }

QuantityValue guarded(const GuardedValue& g) {
  QuantityValue q = scalar(g.value);
  if (g.saturated) q.flags.push_back("saturated");
  return q;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 == 1 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

}  // namespace

const std::vector<std::string>& all_instruments() {
  static const std::vector<std::string> names = {
      instrument::kAlpha,      instrument::kDistance,      instrument::kUpdateSize,
      instrument::kGradNorm,   instrument::kNormTest,      instrument::kInnerTest,
      instrument::kOrthoTest,  instrument::kGradHist1d,    instrument::kTicDiag,
      instrument::kHessTrace,  instrument::kEarlyStopping, instrument::kCabs,
      instrument::kMeanGsnr,   instrument::kTicTrace,      instrument::kHessMaxEv,
      instrument::kGradHist2d};
  return names;
}

std::set<std::string> tier_instruments(Tier tier) {
  std::set<std::string> s = {instrument::kAlpha,     instrument::kDistance,  instrument::kUpdateSize,
                             instrument::kGradNorm,  instrument::kNormTest,  instrument::kInnerTest,
                             instrument::kOrthoTest, instrument::kGradHist1d};
  if (tier == Tier::kEconomy) return s;
  s.insert({instrument::kTicDiag, instrument::kHessTrace, instrument::kEarlyStopping,
            instrument::kCabs, instrument::kMeanGsnr, instrument::kTicTrace});
  if (tier == Tier::kBusiness) return s;
  s.insert({instrument::kHessMaxEv, instrument::kGradHist2d});
  return s;
}

Tier parse_tier(const std::string& name) {
  if (name == "economy") return Tier::kEconomy;
  if (name == "business") return Tier::kBusiness;
  if (name == "full") return Tier::kFull;
  throw ConfigError("unknown tier '" + name + "' (expected economy, business or full)");
}

std::string tier_name(Tier tier) {
  switch (tier) {
    case Tier::kEconomy: return "economy";
    case Tier::kBusiness: return "business";
    case Tier::kFull: return "full";
  }
  return "";
}

Schedule Schedule::every_k(std::size_t k) {
  if (k == 0) throw ConfigError("schedule: interval must be >= 1");
  Schedule s;
  s.kind_ = Kind::kEvery;
  s.k_ = k;
  return s;
}

Schedule Schedule::log_spaced(double base) {
  if (!(base > 1.0) || !std::isfinite(base)) throw ConfigError("schedule: log base must be > 1");
  Schedule s;
  s.kind_ = Kind::kLog;
  s.base_ = base;
  return s;
}

Schedule Schedule::never() { return Schedule{}; }

bool Schedule::fires(std::size_t iteration) const {
  switch (kind_) {
    case Kind::kNever: return false;
    case Kind::kEvery: return iteration % k_ == 0;
    case Kind::kLog: {
      if (iteration == 0) return true;
      const double target = static_cast<double>(iteration);
      for (int m = 0;; ++m) {
        const double v = std::floor(std::pow(base_, m));
        if (v == target) return true;
        if (v > target) return false;
      }
    }
  }
  return false;
}

std::size_t Schedule::count(std::size_t steps) const {
  std::size_t c = 0;
  for (std::size_t t = 0; t <= steps; ++t) c += fires(t) ? 1 : 0;
  return c;
}

TrackingConfig TrackingConfig::for_tier(Tier tier, Schedule schedule) {
  TrackingConfig c;
  c.instruments = tier_instruments(tier);
  c.schedule = schedule;
  return c;
}

void TrackingConfig::validate() const {
  const auto& known = all_instruments();
  for (const auto& name : instruments) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown instrument '" + name + "'");
    }
  }
  hist_range.validate();
  hist2d.y.validate();
  if (hist2d.x_bins == 0) throw ConfigError("2-D histogram needs at least one x bin");
  if (power.max_iters == 0) throw ConfigError("power iteration needs max_iters >= 1");
  if (curvature.mode == DiagMode::kMonteCarlo && curvature.mc_samples == 0) {
    throw ConfigError("Monte Carlo curvature needs at least one sample");
  }
}

std::vector<double> sgd_step(std::span<const double> params, std::span<const double> grad, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sgd: learning rate must be positive");
  if (params.size() != grad.size()) throw DimensionError("sgd: gradient length mismatch");
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("sgd: non-finite gradient entry at index " + std::to_string(i));
    }
    out[i] = params[i] - lr * grad[i];
  }
  return out;
}

std::map<std::string, QuantityValue> evaluate_instruments(const TrackingConfig& config,
                                                          const EventInputs& in) {
  namespace ins = instrument;
  std::map<std::string, QuantityValue> q;
  const BatchObservables& obs = *in.obs;
  q[ins::kLoss] = scalar(obs.batch_loss);
  q[ins::kLearningRate] = scalar(in.lr);
  const bool has_step = in.next_params != nullptr;

  if (config.has(ins::kAlpha) && has_step && in.next_obs != nullptr) {
    try {
      const auto& before = in.params->values;
      const auto& after = in.next_params->values;
      if (before.size() != after.size()) throw DimensionError("alpha: parameter vectors differ in length");
      std::vector<double> update(before.size());
      for (std::size_t j = 0; j < update.size(); ++j) update[j] = after[j] - before[j];
      const AlphaFit fit = fit_alpha(update, obs, *in.next_obs);
      QuantityValue v = scalar(fit.alpha);
      v.meta["alpha_raw"] = fit.alpha_raw;
      if (fit.fallback) v.flags.push_back("fallback");
      if (fit.damped) v.flags.push_back("damped");
      q[ins::kAlpha] = v;
    } catch (const DomainError&) {
      // zero-length step: no fit
    }
  }
  if (config.has(ins::kDistance)) {
    q[ins::kDistance] = scalar(l2_distance(in.params->values, in.initial->values));
  }
  if (config.has(ins::kUpdateSize) && has_step) {
    q[ins::kUpdateSize] = scalar(l2_distance(in.next_params->values, in.params->values));
  }
  if (config.has(ins::kGradNorm)) {
    q[ins::kGradNorm] = scalar(grad_norm(obs));
    if (config.layerwise) q["GradNorm.layers"] = QuantityValue{grad_norm_layers(obs), {}, {}};
  }
  if (config.has(ins::kNormTest) || config.has(ins::kInnerTest) || config.has(ins::kOrthoTest)) {
    try {
      const GradientTestResult r = gradient_tests(obs);
      if (config.has(ins::kNormTest)) q[ins::kNormTest] = scalar(r.theta_norm);
      if (config.has(ins::kInnerTest)) q[ins::kInnerTest] = scalar(r.theta_inner);
      if (config.has(ins::kOrthoTest)) q[ins::kOrthoTest] = scalar(r.nu_ortho);
    } catch (const DomainError&) {
      // |B| < 2 or vanishing mini-batch gradient
    }
  }
  if (config.has(ins::kGradHist1d)) {
    q[ins::kGradHist1d] = QuantityValue{grad_hist_1d(obs, config.hist_range), {}, {}};
    if (config.layerwise) {
      const auto layers = grad_hist_1d_layers(obs, config.hist_range);
      for (std::size_t k = 0; k < layers.size(); ++k) {
        q["GradHist1d.layer" + std::to_string(k)] = QuantityValue{layers[k], {}, {}};
      }
    }
  }
  if (in.probe != nullptr) {
    const CurvatureProbe& probe = *in.probe;
    const bool estimate = probe.diag_is_estimate();
    auto diag_based = [&](QuantityValue v) {
      if (estimate) v.flags.push_back("estimate");
      return v;
    };
    if (config.has(ins::kHessTrace)) {
      q[ins::kHessTrace] = diag_based(scalar(hess_trace(probe)));
      if (config.layerwise) q["HessTrace.layers"] = diag_based(QuantityValue{hess_trace_layers(probe), {}, {}});
    }
    if (config.has(ins::kTicDiag)) q[ins::kTicDiag] = diag_based(guarded(tic(probe, obs, TicVariant::kDiag)));
    if (config.has(ins::kTicTrace)) q[ins::kTicTrace] = diag_based(guarded(tic(probe, obs, TicVariant::kTrace)));
    if (config.has(ins::kHessMaxEv)) {
      PowerIterationOptions po = config.power;
      po.seed = config.power.seed + kSeedStride * in.iteration;
      const PowerIterationResult r = hess_max_ev(probe, po);
      QuantityValue v = scalar(r.value);
      v.meta["iterations"] = static_cast<double>(r.iterations);
      if (!r.converged) v.flags.push_back("not_converged");
      if (r.value < 0.0) v.flags.push_back("negative");
      q[ins::kHessMaxEv] = v;
    }
  }
  if (obs.batch_size() >= 2) {
    if (config.has(ins::kEarlyStopping)) q[ins::kEarlyStopping] = guarded(early_stopping_criterion(obs));
    if (config.has(ins::kMeanGsnr)) q[ins::kMeanGsnr] = guarded(mean_gsnr(obs));
  }
  if (config.has(ins::kCabs)) {
    try {
      q[ins::kCabs] = scalar(cabs_batch_size(obs, in.lr));
    } catch (const DomainError&) {
      // mini-batch loss is zero
    }
  }
  if (config.has(ins::kGradHist2d)) {
    q[ins::kGradHist2d] = QuantityValue{grad_hist_2d(in.params->values, obs, config.hist2d), {}, {}};
  }
  return q;
}

RunResult run_experiment(const Problem& problem, const TrackingConfig& config,
                         const RunOptions& options, const EventSink& sink) {
  config.validate();
  if (!(options.lr > 0.0) || !std::isfinite(options.lr)) {
    throw ConfigError("run: learning rate must be positive");
  }
  const std::size_t batch_size = options.batch_size == 0 ? problem.info().default_batch_size : options.batch_size;
  BatchSampler sampler = problem.sampler(batch_size, options.seed);
  const Objective& objective = problem.objective();
  const bool wants_samples = any_of(config, kNeedsSampleGrads);
  const bool wants_curvature = any_of(config, kNeedsCurvature);
  const bool wants_alpha = config.has(instrument::kAlpha);
  const auto start = Clock::now();

  RunResult result;
  const ParamVector& initial = problem.initial_params();
  ParamVector theta = initial;

  // the tracked iteration whose event waits for the next evaluation
  struct Pending {
    std::size_t iteration;
    ParamVector params;
    BatchObservables obs;
    std::optional<CurvatureProbe> probe;
  };
  std::optional<Pending> pending;
  BatchObservables spare;  // per-sample storage handed back for reuse

  auto emit = [&](const Pending& p, const ParamVector* next_params, const BatchObservables* next_obs) {
    EventInputs in{p.iteration, options.lr, &p.params, &initial, &p.obs,
                   p.probe ? &*p.probe : nullptr, next_params, next_obs};
    TrackEvent event{p.iteration, 0.0, evaluate_instruments(config, in)};
    if (options.record_time) event.time_s = seconds_since(start);
    result.events.push_back(event);
    return event;
  };

  for (std::size_t t = 0; t <= options.steps; ++t) {
    const auto step_start = Clock::now();
    const std::vector<std::size_t> indices = sampler.next();
    const Batch batch = problem.gather(indices);
    const bool tracked = config.schedule.fires(t);
    const bool sample_grads = tracked && wants_samples;
    BatchObservables obs;
    if (pending && wants_alpha) {
      // Alpha only needs the next batch's gradients along the update
      std::vector<double> update(theta.values.size());
      for (std::size_t j = 0; j < update.size(); ++j) update[j] = theta.values[j] - pending->params.values[j];
      obs = backward_projected(objective, theta.values, batch, update, sample_grads, std::move(spare));
    } else if (sample_grads) {
      obs = backward_per_sample(objective, theta.values, batch, std::move(spare));
    } else {
      obs = backward_batch(objective, theta.values, batch);
    }
    result.losses.push_back(obs.batch_loss);
    if (options.keep_trajectory) result.trajectory.push_back(theta.values);

    std::optional<TrackEvent> finished;
    if (pending) {
      finished = emit(*pending, &theta, &obs);
      spare = std::move(pending->obs);
      pending.reset();
    }
    std::optional<Pending> tracked_now;
    if (tracked) {
      tracked_now = Pending{t, theta, {}, std::nullopt};
      if (wants_curvature) {
        CurvatureOptions co = config.curvature;
        co.seed = config.curvature.seed + kSeedStride * t;
        tracked_now->probe = make_curvature_probe(objective, theta.values, batch, co);
      }
    }
    if (t < options.steps) {
      theta.values = sgd_step(theta.values, obs.batch_grad, options.lr);
    }
    if (tracked_now) {
      tracked_now->obs = std::move(obs);
      pending = std::move(tracked_now);
    } else if (obs.has_sample_grads()) {
      spare = std::move(obs);
    }
    if (pending && t == options.steps) {
      const Pending last = std::move(*pending);
      pending.reset();
      const TrackEvent event = emit(last, nullptr, nullptr);
      result.step_seconds.push_back(seconds_since(step_start));
      if (finished && sink) sink(*finished);
      if (sink) sink(event);
      continue;
    }
    result.step_seconds.push_back(seconds_since(step_start));
    if (finished && sink) sink(*finished);
  }
  result.final_params = theta;
  return result;
}

std::vector<BenchmarkCell> overhead_benchmark(const Problem& problem, const BenchmarkOptions& options) {
  if (options.repeats < 3) throw ConfigError("benchmark: at least 3 repeats are required");
  if (options.intervals.empty() || options.configs.empty()) {
    throw ConfigError("benchmark: need at least one config and one interval");
  }
  if (options.iterations == 0) throw ConfigError("benchmark: iterations must be >= 1");
  if (options.segments == 0) throw ConfigError("benchmark: segments must be >= 1");
  const std::size_t segments = options.segments;
  RunOptions run;
  run.steps = options.iterations;
  run.lr = options.lr > 0.0 ? options.lr : problem.info().default_lr;
  run.batch_size = options.batch_size;

  auto per_step = [&](const TrackingConfig& config, std::uint64_t seed) {
    run.seed = seed;
    const RunResult r = run_experiment(problem, config, run);
    double total = 0.0;
    for (std::size_t t = 1; t < r.step_seconds.size(); ++t) total += r.step_seconds[t];
    return total / static_cast<double>(r.step_seconds.size() - 1);
  };

  TrackingConfig baseline;
  baseline.schedule = Schedule::never();
  const std::size_t cells = options.configs.size() * options.intervals.size();
  std::vector<std::vector<double>> times(cells), ratios(cells);
  for (std::size_t rep = 0; rep < options.repeats; ++rep) {
    const std::uint64_t seed = options.seed + rep;
    std::size_t cell = 0;
    for (const auto& tier : options.configs) {
      for (std::size_t interval : options.intervals) {
        // baseline and tracked runs alternate so machine drift cancels in the ratio
        TrackingConfig config = baseline;
        if (tier) {
          config = TrackingConfig::for_tier(*tier, Schedule::every_k(interval));
          config.curvature = options.curvature;
        }
        double base = 0.0, t = 0.0;
        for (std::size_t s = 0; s < segments; ++s) {
          base += per_step(baseline, seed);
          t += per_step(config, seed);
        }
        base /= static_cast<double>(segments);
        t /= static_cast<double>(segments);
        times[cell].push_back(t);
        ratios[cell].push_back(t / base);
        ++cell;
      }
    }
  }
  std::vector<BenchmarkCell> out;
  std::size_t cell = 0;
  for (const auto& tier : options.configs) {
    for (std::size_t interval : options.intervals) {
      out.push_back({tier ? tier_name(*tier) : "baseline", interval, median(times[cell]), median(ratios[cell])});
      ++cell;
    }
  }
  return out;
}

}  // namespace trainscope
