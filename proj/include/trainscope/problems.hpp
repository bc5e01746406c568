// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic training problems. The problem seed fixes the training set
// and the initial parameters; the sampler seed fixes the batch order.

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trainscope/model.hpp"

namespace trainscope {

struct ProblemInfo {
  std::string name;
  std::size_t n_train = 0;
  std::size_t default_batch_size = 0;
  double default_lr = 0.0;
  std::size_t default_steps = 0;
};

/// Mini-batches drawn without replacement: each epoch is a fresh permutation
/// of [0, N), cut into consecutive batches; the incomplete tail is dropped.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t batch_size() const { return batch_size_; }
  std::size_t batches_per_epoch() const { return n_ / batch_size_; }

 private:
  void reshuffle();

  std::size_t n_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

class Problem {
 public:
  Problem(ProblemInfo info, std::shared_ptr<const Objective> objective, Batch train_set,
          ParamVector init);

  const ProblemInfo& info() const { return info_; }
  const Objective& objective() const { return *objective_; }
  std::shared_ptr<const Objective> objective_ptr() const { return objective_; }
  const Batch& train_set() const { return train_set_; }
  const ParamVector& initial_params() const { return init_; }

  /// Rows of the training set in the given order.
  Batch gather(std::span<const std::size_t> indices) const;
  /// Throws ConfigError unless 1 <= batch_size <= N.
  BatchSampler sampler(std::size_t batch_size, std::uint64_t seed) const;

 private:
  ProblemInfo info_;
  std::shared_ptr<const Objective> objective_;
  Batch train_set_;
  ParamVector init_;
};

/// Per-sample loss 0.5 (theta - c_n)^T A (theta - c_n) in D dimensions. A has a
/// random orthogonal eigenbasis; 90% of its eigenvalues are log-uniform in
/// [0.1, 1] and the rest uniform in [30, 60]. Centers c_n ~ N(0, I).
Problem noisy_quadratic(std::size_t dim = 100, std::uint64_t seed = 0);

/// Two-dimensional quadratic with eigenvalues 100 and 1 in a basis rotated by
/// 30 degrees; centers c_n ~ N(0, 0.01^2 I), N = 1024. The start lies at
/// mean(c) + Q (1, 1), off both principal axes.
Problem anisotropic_quadratic(std::uint64_t seed = 0);

/// Step sizes for the paired runs on anisotropic_quadratic: one far below the
/// stable range of the stiff direction, one just below its edge 2 / 100.
inline constexpr double kUnderstepLr = 0.002 / 100.0;
inline constexpr double kEdgeOfStabilityLr = 1.998 / 100.0;

/// f(theta, x) = w2 w1 x with squared error, x ~ N(0, 1), y = 1.4 x + eps,
/// eps ~ N(0, 1), N = 100, theta_0 = (w1, w2) = (0.1, 1.7).
Problem two_param_regression(std::uint64_t seed = 0);

/// Softmax regression on Gaussian class blobs.
Problem logistic_regression_synthetic(std::size_t d_in = 20, std::size_t classes = 2,
                                      std::size_t n = 2000, std::uint64_t seed = 0);

enum class InputScale { kNormalized, kRaw255 };

/// 64-32-32-2 perceptron on two-class 8x8 image-like inputs in [0, 1]
/// (times 255 for kRaw255). Data and initial parameters depend only on the
/// seed, so variants that differ in activation or scale are paired.
///
/// The first layer's weights start at zero, so at step 0 every downstream
/// activation is independent of the input scale. Later layers use weight gain
/// 0.5. Biases start at 0.1 for ReLU and at 25 for sigmoid, which saturates
/// every hidden unit.
Problem mlp_classification(ActivationKind activation = ActivationKind::kRelu,
                           InputScale scale = InputScale::kNormalized, std::uint64_t seed = 0);

/// Builds a problem from its registry name. MLP variants take colon-separated
/// options, e.g. "mlp_classification:sigmoid:raw255". Throws ConfigError for
/// unknown names.
Problem make_problem(const std::string& name, std::uint64_t seed = 0);

std::vector<std::string> problem_names();

}  // namespace trainscope
