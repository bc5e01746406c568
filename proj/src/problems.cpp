// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

constexpr std::size_t kImageSide = 8;
constexpr double kReluBias = 0.1;
constexpr double kSigmoidBias = 25.0;  // sigmoid'(25) ~ 1e-11

// Random orthogonal matrix from Gram-Schmidt on Gaussian columns, stored
// column-major in a row-major Tensor (Q(i, k) is entry i of column k).
Tensor random_orthogonal(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor q = Tensor::matrix(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> v(d);
    double norm = 0.0;
    while (norm < 1e-8) {
      for (double& x : v) x = normal(rng);
      // two passes keep the columns orthogonal to machine precision
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < k; ++c) {
          double dot = 0.0;
          for (std::size_t i = 0; i < d; ++i) dot += q(i, c) * v[i];
          for (std::size_t i = 0; i < d; ++i) v[i] -= dot * q(i, c);
        }
      }
      norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
    }
    for (std::size_t i = 0; i < d; ++i) q(i, k) = v[i] / norm;
  }
  return q;
}

// Q diag(eigenvalues) Q^T, symmetrized.
Tensor spectral_matrix(const Tensor& q, const std::vector<double>& eigenvalues) {
  const std::size_t d = eigenvalues.size();
  Tensor a = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += q(i, k) * eigenvalues[k] * q(j, k);
      a(i, j) = s;
      a(j, i) = s;
    }
  }
  return a;
}

std::vector<double> column_means(const Tensor& x) {
  std::vector<double> m(x.cols(), 0.0);
  for (std::size_t n = 0; n < x.rows(); ++n)
    for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x(n, j);
  for (double& v : m) v /= static_cast<double>(x.rows());
  return m;
}

ParamVector flat_params(const Objective& objective, std::vector<double> values) {
  return ParamVector{std::move(values), objective.layout()};
}

// Smooth 8x8 pattern from a few random low-frequency cosines, scaled to [-1, 1].
std::vector<double> random_template(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(0.5, 2.0), phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> t(kImageSide * kImageSide, 0.0);
  for (int term = 0; term < 3; ++term) {
    const double fx = freq(rng), fy = freq(rng), px = phase(rng), py = phase(rng), amp = normal(rng);
    for (std::size_t r = 0; r < kImageSide; ++r) {
      for (std::size_t c = 0; c < kImageSide; ++c) {
        const double u = static_cast<double>(c) / kImageSide, v = static_cast<double>(r) / kImageSide;
        t[r * kImageSide + c] += amp * std::cos(2.0 * std::numbers::pi * fx * u + px) *
                                 std::cos(2.0 * std::numbers::pi * fy * v + py);
      }
    }
  }
  double peak = 0.0;
  for (double x : t) peak = std::max(peak, std::abs(x));
  if (peak > 0.0) {
    for (double& x : t) x /= peak;
  }
  return t;
}

}  // namespace

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed), order_(n) {
  if (batch_size == 0 || batch_size > n) {
    throw ConfigError("sampler: batch size must be in [1, N]");
  }
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ + batch_size_ > n_) reshuffle();
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return out;
}

Problem::Problem(ProblemInfo info, std::shared_ptr<const Objective> objective, Batch train_set,
                 ParamVector init)
    : info_(std::move(info)),
      objective_(std::move(objective)),
      train_set_(std::move(train_set)),
      init_(std::move(init)) {
  objective_->check_batch(train_set_);
  if (init_.values.size() != objective_->dim()) {
    throw DimensionError("problem: initial parameters do not match the objective");
  }
  info_.n_train = train_set_.size();
}

Batch Problem::gather(std::span<const std::size_t> indices) const {
  const Tensor& x = train_set_.inputs;
  const Tensor& y = train_set_.targets;
  Batch b{Tensor::matrix(indices.size(), x.cols()), Tensor::matrix(indices.size(), y.cols())};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t n = indices[r];
    if (n >= train_set_.size()) throw DimensionError("problem: sample index out of range");
    for (std::size_t j = 0; j < x.cols(); ++j) b.inputs(r, j) = x(n, j);
    for (std::size_t j = 0; j < y.cols(); ++j) b.targets(r, j) = y(n, j);
  }
  return b;
}

BatchSampler Problem::sampler(std::size_t batch_size, std::uint64_t seed) const {
  return BatchSampler(train_set_.size(), batch_size, seed);
}

Problem noisy_quadratic(std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("noisy_quadratic: D must be at least 2");
  constexpr std::size_t n = 512;
  std::mt19937_64 rng(seed);
  const Tensor q = random_orthogonal(dim, rng);
  const std::size_t sharp = std::max<std::size_t>(1, dim / 10);
  std::uniform_real_distribution<double> log_flat(std::log(0.1), 0.0), steep(30.0, 60.0);
  std::vector<double> eigenvalues(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    eigenvalues[k] = k < dim - sharp ? std::exp(log_flat(rng)) : steep(rng);
  }
  auto objective = std::make_shared<QuadraticObjective>(spectral_matrix(q, eigenvalues));

  std::normal_distribution<double> normal(0.0, 1.0);
  Batch data{Tensor::matrix(n, dim), Tensor::matrix(n, 1)};
  for (double& c : data.inputs.data()) c = normal(rng);
  std::vector<double> init(dim);
  for (double& x : init) x = normal(rng);
  ParamVector start = flat_params(*objective, std::move(init));
  return Problem({"noisy_quadratic", n, 32, 0.01, 500}, std::move(objective), std::move(data),
                 std::move(start));
}

Problem anisotropic_quadratic(std::uint64_t seed) {
  constexpr std::size_t n = 1024;
  constexpr double angle = std::numbers::pi / 6.0;
  constexpr double noise = 0.01;
  const double c = std::cos(angle), s = std::sin(angle);
  Tensor q = Tensor::matrix(2, 2, {c, -s, s, c});
  auto objective = std::make_shared<QuadraticObjective>(spectral_matrix(q, {100.0, 1.0}));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  Batch data{Tensor::matrix(n, 2), Tensor::matrix(n, 1)};
  for (double& v : data.inputs.data()) v = normal(rng);
  std::vector<double> init = column_means(data.inputs);
  init[0] += q(0, 0) + q(0, 1);
  init[1] += q(1, 0) + q(1, 1);
  ParamVector start = flat_params(*objective, std::move(init));
  return Problem({"anisotropic_quadratic", n, 32, kUnderstepLr, 200}, std::move(objective),
                 std::move(data), std::move(start));
}

Problem two_param_regression(std::uint64_t seed) {
  constexpr std::size_t n = 100;
  auto model = std::make_shared<Model>(std::vector<Layer>{Dense{1, 1, false}, Dense{1, 1, false}},
                                       LossKind::kMse);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch data{Tensor::matrix(n, 1), Tensor::matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = normal(rng);
    data.inputs(i, 0) = x;
    data.targets(i, 0) = 1.4 * x + normal(rng);
  }
  ParamVector start = flat_params(*model, {0.1, 1.7});
  return Problem({"two_param_regression", n, 95, 0.1, 20000}, std::move(model), std::move(data),
                 std::move(start));
}

Problem logistic_regression_synthetic(std::size_t d_in, std::size_t classes, std::size_t n,
                                      std::uint64_t seed) {
  if (d_in == 0 || classes < 2 || n < classes) {
    throw ConfigError("logistic_regression_synthetic: need d_in >= 1, classes >= 2, N >= classes");
  }
  constexpr double separation = 4.0;  // distance of each class mean from the origin
  auto model = std::make_shared<Model>(std::vector<Layer>{Dense{d_in, classes, true}},
                                       LossKind::kCrossEntropy);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(classes, std::vector<double>(d_in));
  for (auto& m : means) {
    double norm = 0.0;
    for (double& v : m) {
      v = normal(rng);
      norm += v * v;
    }
    for (double& v : m) v *= separation / std::sqrt(norm);
  }
  Batch data{Tensor::matrix(n, d_in), Tensor::matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    data.targets(i, 0) = static_cast<double>(label);
    for (std::size_t j = 0; j < d_in; ++j) data.inputs(i, j) = means[label][j] + normal(rng);
  }
  ParamVector start = flat_params(*model, std::vector<double>(model->dim(), 0.0));
  return Problem({"logistic_regression_synthetic", n, 64, 0.5, 2000}, std::move(model),
                 std::move(data), std::move(start));
}

Problem mlp_classification(ActivationKind activation, InputScale scale, std::uint64_t seed) {
  if (activation != ActivationKind::kRelu && activation != ActivationKind::kSigmoid) {
    throw ConfigError("mlp_classification: activation must be relu or sigmoid");
  }
  constexpr std::size_t n = 2048;
  constexpr std::size_t pixels = kImageSide * kImageSide;
  constexpr double label_noise = 0.1;
  auto model = std::make_shared<Model>(Model::mlp({pixels, 32, 32, 2}, activation, LossKind::kCrossEntropy));

  std::mt19937_64 rng(seed);
  const std::vector<double> templates[2] = {random_template(rng), random_template(rng)};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double factor = scale == InputScale::kRaw255 ? 255.0 : 1.0;
  Batch data{Tensor::matrix(n, pixels), Tensor::matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    const double brightness = 0.1 * normal(rng);
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = 0.5 + 0.3 * templates[label][p] + brightness + 0.2 * normal(rng);
      data.inputs(i, p) = factor * std::clamp(v, 0.0, 1.0);
    }
    const bool flip = unit(rng) < label_noise;
    data.targets(i, 0) = static_cast<double>(flip ? 1 - label : label);
  }

  InitOptions init;
  init.bias_value = activation == ActivationKind::kRelu ? kReluBias : kSigmoidBias;
  init.layer_weight_gain = {0.0, 0.5, 0.5};
  ParamVector start = model->init(seed, init);

  std::ostringstream name;
  name << "mlp_classification:" << (activation == ActivationKind::kRelu ? "relu" : "sigmoid") << ':'
       << (scale == InputScale::kRaw255 ? "raw255" : "normalized");
  return Problem({name.str(), n, 64, 0.05, 1000}, std::move(model), std::move(data), std::move(start));
}

Problem make_problem(const std::string& name, std::uint64_t seed) {
  std::vector<std::string> parts;
  std::stringstream stream(name);
  for (std::string part; std::getline(stream, part, ':');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("unknown problem ''");
  const std::string& base = parts[0];
  if (base == "mlp_classification") {
    ActivationKind act = ActivationKind::kRelu;
    InputScale scale = InputScale::kNormalized;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i] == "relu") act = ActivationKind::kRelu;
      else if (parts[i] == "sigmoid") act = ActivationKind::kSigmoid;
      else if (parts[i] == "normalized") scale = InputScale::kNormalized;
      else if (parts[i] == "raw255") scale = InputScale::kRaw255;
      else throw ConfigError("mlp_classification: unknown option '" + parts[i] + "'");
    }
    return mlp_classification(act, scale, seed);
  }
  if (parts.size() > 1) throw ConfigError("problem '" + base + "' takes no options");
  if (base == "noisy_quadratic") return noisy_quadratic(100, seed);
  if (base == "anisotropic_quadratic") return anisotropic_quadratic(seed);
  if (base == "two_param_regression") return two_param_regression(seed);
  if (base == "logistic_regression_synthetic") return logistic_regression_synthetic(20, 2, 2000, seed);
  throw ConfigError("unknown problem '" + name + "'");
}

std::vector<std::string> problem_names() {
  return {"noisy_quadratic", "anisotropic_quadratic", "two_param_regression",
          "logistic_regression_synthetic", "mlp_classification"};
}

}  // namespace trainscope
