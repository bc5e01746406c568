// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// SGD training loop with scheduled instrument evaluation, configuration tiers,
// and the overhead benchmark.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trainscope/observables.hpp"
#include "trainscope/problems.hpp"
#include "trainscope/quantities.hpp"

namespace trainscope {

namespace instrument {
inline constexpr const char* kLoss = "Loss";
inline constexpr const char* kLearningRate = "LearningRate";
inline constexpr const char* kAlpha = "Alpha";
inline constexpr const char* kDistance = "Distance";
inline constexpr const char* kUpdateSize = "UpdateSize";
inline constexpr const char* kGradNorm = "GradNorm";
inline constexpr const char* kNormTest = "NormTest";
inline constexpr const char* kInnerTest = "InnerTest";
inline constexpr const char* kOrthoTest = "OrthoTest";
inline constexpr const char* kGradHist1d = "GradHist1d";
inline constexpr const char* kTicDiag = "TICDiag";
inline constexpr const char* kTicTrace = "TICTrace";
inline constexpr const char* kHessTrace = "HessTrace";
inline constexpr const char* kEarlyStopping = "EarlyStopping";
inline constexpr const char* kCabs = "CABS";
inline constexpr const char* kMeanGsnr = "MeanGSNR";
inline constexpr const char* kHessMaxEv = "HessMaxEV";
inline constexpr const char* kGradHist2d = "GradHist2d";
}  // namespace instrument

/// Every configurable instrument name (Loss and LearningRate are always logged).
const std::vector<std::string>& all_instruments();

enum class Tier { kEconomy, kBusiness, kFull };

/// Nested instrument sets: economy is a subset of business, business of full.
std::set<std::string> tier_instruments(Tier tier);
Tier parse_tier(const std::string& name);
std::string tier_name(Tier tier);

/// When to track. every_k fires on multiples of k; log_spaced fires on
/// floor(base^m) for m = 0, 1, 2, ... and always on 0.
class Schedule {
 public:
  static Schedule every_k(std::size_t k);
  static Schedule log_spaced(double base);
  static Schedule never();

  bool fires(std::size_t iteration) const;
  std::size_t count(std::size_t steps) const;  // events over iterations 0..steps

 private:
  enum class Kind { kEvery, kLog, kNever };
  Kind kind_ = Kind::kNever;
  std::size_t k_ = 1;
  double base_ = 2.0;
};

struct TrackingConfig {
  std::set<std::string> instruments;
  Schedule schedule = Schedule::every_k(1);
  CurvatureOptions curvature;
  BinRange hist_range;
  Hist2dOptions hist2d;
  PowerIterationOptions power;
  /// Adds per-layer GradNorm, HessTrace and GradHist1d entries.
  bool layerwise = false;

  static TrackingConfig for_tier(Tier tier, Schedule schedule);
  /// Throws ConfigError for unknown instrument names.
  void validate() const;
  bool has(const std::string& name) const { return instruments.count(name) > 0; }
};

struct TrackEvent {
  std::size_t iteration = 0;
  double time_s = 0.0;
  std::map<std::string, QuantityValue> quantities;

  friend bool operator==(const TrackEvent&, const TrackEvent&) = default;
};

struct RunOptions {
  std::size_t steps = 0;
  double lr = 0.0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  /// Fill TrackEvent::time_s with seconds since the run started; 0 otherwise.
  bool record_time = false;
  bool keep_trajectory = false;
};

struct RunResult {
  std::vector<TrackEvent> events;
  ParamVector final_params;
  std::vector<double> losses;                    // batch loss at iterations 0..steps
  std::vector<double> step_seconds;              // wall time per iteration, logging excluded
  std::vector<std::vector<double>> trajectory;   // theta_0..theta_steps if kept
};

using EventSink = std::function<void(const TrackEvent&)>;

/// theta - lr * grad. Throws ConfigError for lr <= 0 and NumericError for a
/// non-finite gradient.
std::vector<double> sgd_step(std::span<const double> params, std::span<const double> grad, double lr);

/// Runs SGD for `steps` updates over iterations 0..steps.
///
/// The event of iteration t is emitted once iteration t+1 has been evaluated,
/// because Alpha and UpdateSize describe the step t -> t+1 and reuse the next
/// mini-batch's observables. The last iteration is evaluated but not stepped.
/// Events reach `sink` as they complete, so an aborted run leaves a partial log.
RunResult run_experiment(const Problem& problem, const TrackingConfig& config,
                         const RunOptions& options, const EventSink& sink = {});

/// Evaluates the configured instruments at one iteration from shared inputs.
/// `next` carries the following iteration's parameters and observables when
/// the step exists.
struct EventInputs {
  std::size_t iteration = 0;
  double lr = 0.0;
  const ParamVector* params = nullptr;
  const ParamVector* initial = nullptr;
  const BatchObservables* obs = nullptr;
  const CurvatureProbe* probe = nullptr;
  const ParamVector* next_params = nullptr;
  const BatchObservables* next_obs = nullptr;
};

std::map<std::string, QuantityValue> evaluate_instruments(const TrackingConfig& config,
                                                          const EventInputs& in);

struct BenchmarkOptions {
  std::vector<std::optional<Tier>> configs;  // nullopt is the no-tracking baseline
  std::vector<std::size_t> intervals;
  std::size_t repeats = 3;
  std::size_t iterations = 32;
  /// Baseline and tracked runs of `iterations` steps alternate this many times
  /// per repeat and cell; their times are averaged.
  std::size_t segments = 1;
  std::size_t batch_size = 0;  // 0 uses the problem default
  double lr = 0.0;             // 0 uses the problem default
  std::uint64_t seed = 0;
  CurvatureOptions curvature;
};

struct BenchmarkCell {
  std::string config;  // tier name or "baseline"
  std::size_t interval = 0;
  double seconds_per_step = 0.0;  // median over repeats
  double ratio = 0.0;             // median over repeats of time / baseline time
};

/// Per-step wall time over iterations 1..iterations (iteration 0 is warmup)
/// for every config x interval, relative to an untracked run with the same
/// seed. Repeats use seeds seed, seed+1, ...; throws ConfigError for
/// repeats < 3.
std::vector<BenchmarkCell> overhead_benchmark(const Problem& problem, const BenchmarkOptions& options);

}  // namespace trainscope
