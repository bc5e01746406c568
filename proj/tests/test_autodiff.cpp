// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Dense>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "trainscope/autodiff.hpp"
#include "trainscope/errors.hpp"
#include "trainscope/model.hpp"
#include "trainscope/observables.hpp"

using namespace trainscope;
using namespace trainscope::testing;

namespace {

Batch make_batch(std::vector<double> x, std::size_t d_in, std::vector<double> y, std::size_t d_out) {
  const std::size_t n = x.size() / d_in;
  return Batch{Tensor::matrix(n, d_in, std::move(x)), Tensor::matrix(n, d_out, std::move(y))};
}

Model scalar_linear(bool bias) { return Model({Dense{1, 1, bias}}, LossKind::kMse); }

Batch quadratic_batch(std::size_t d, std::size_t n = 1) {
  return Batch{Tensor::matrix(n, d), Tensor::matrix(n, 0)};
}

}  // namespace

TEST_CASE("engine: gradients of simple expressions") {
  auto x = ad::leaf(Tensor::matrix(1, 2, {1.0, 2.0}));
  auto y = ad::leaf(Tensor::matrix(2, 1, {3.0, 4.0}));
  auto z = ad::matmul(x, y);  // 11
  auto g = ad::grad(ad::mul(z, z), {x, y});
  CHECK(g[0].value()(0, 0) == doctest::Approx(2 * 11 * 3.0));
  CHECK(g[0].value()(0, 1) == doctest::Approx(2 * 11 * 4.0));
  CHECK(g[1].value()(1, 0) == doctest::Approx(2 * 11 * 2.0));

  SUBCASE("unreached inputs get zero gradients") {
    auto w = ad::leaf(Tensor::matrix(1, 1, {5.0}));
    auto gw = ad::grad(ad::sum_all(x), {w});
    CHECK(gw[0].value()(0, 0) == 0.0);
  }
  SUBCASE("second derivative through create_graph") {
    auto t = ad::leaf(Tensor::scalar(0.3));
    auto s = ad::sigmoid(t);
    auto g1 = ad::grad(s, {t}, true)[0];
    auto g2 = ad::grad(g1, {t})[0];
    const double sv = 1.0 / (1.0 + std::exp(-0.3));
    CHECK(g1.value()(0, 0) == doctest::Approx(sv * (1 - sv)));
    CHECK(g2.value()(0, 0) == doctest::Approx(sv * (1 - sv) * (1 - 2 * sv)));
  }
  SUBCASE("no-grad mode records nothing") {
    ad::NoGradGuard guard;
    auto r = ad::mul(x, x);
    CHECK_FALSE(r.requires_grad());
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(ad::add(x, y), DimensionError);
    CHECK_THROWS_AS(ad::matmul(x, x), DimensionError);
  }
}

TEST_CASE("forward_batch examples") {
  SUBCASE("identity model with mse on input == target gives zero loss") {
    Model identity({Dense{2, 2, true}}, LossKind::kMse);
    ParamVector p{std::vector<double>{1, 0, 0, 1, 0, 0}, identity.layout()};
    auto batch = make_batch({1, 2, 3, 4}, 2, {1, 2, 3, 4}, 2);
    auto out = forward_batch(identity, p.values, batch);
    CHECK(out.batch_loss == 0.0);
    for (double l : out.sample_losses) CHECK(l == 0.0);
  }
  SUBCASE("w=2, b=0 on (x=1, y=0) gives squared error 4") {
    Model m = scalar_linear(true);
    auto out = forward_batch(m, std::vector<double>{2.0, 0.0}, make_batch({1}, 1, {0}, 1));
    CHECK(out.sample_losses[0] == 4.0);
    CHECK(out.batch_loss == 4.0);
  }
  SUBCASE("batch loss is the mean of sample losses") {
    Model m = scalar_linear(false);
    // losses (1*1-0)^2 = 1 and (1*1-(1-sqrt3))^2 = 3
    auto out = forward_batch(m, std::vector<double>{1.0},
                             make_batch({1, 1}, 1, {0, 1 - std::sqrt(3.0)}, 1));
    CHECK(out.sample_losses[1] == doctest::Approx(3.0));
    CHECK(out.batch_loss == doctest::Approx(2.0));
  }
  SUBCASE("errors") {
    Model m = scalar_linear(true);
    CHECK_THROWS_AS(forward_batch(m, std::vector<double>{1.0}, make_batch({1}, 1, {0}, 1)),
                    DimensionError);
    CHECK_THROWS_AS(forward_batch(m, std::vector<double>{1.0, 0.0}, make_batch({1, 2}, 2, {0}, 1)),
                    DimensionError);
    CHECK_THROWS_AS(forward_batch(m, std::vector<double>{1.0, 0.0}, make_batch({NAN}, 1, {0}, 1)),
                    NumericError);
    CHECK_THROWS_AS(Model({Dense{2, 3, true}, Dense{2, 1, true}}, LossKind::kMse), DimensionError);
  }
}

TEST_CASE("backward_per_sample examples") {
  SUBCASE("f = w x, (x=1, y=0), w=3 gives g = 6") {
    Model m = scalar_linear(false);
    auto obs = backward_per_sample(m, std::vector<double>{3.0}, make_batch({1}, 1, {0}, 1));
    CHECK(obs.batch_grad[0] == doctest::Approx(6.0));
    CHECK(obs.sample_grads(0, 0) == doctest::Approx(6.0));
  }
  SUBCASE("duplicated samples give identical rows") {
    std::mt19937_64 rng(5);
    auto c = random_mlp_case(rng);
    Batch dup = c.batch;
    const std::size_t d_in = c.batch.inputs.cols(), d_out = c.batch.targets.cols();
    dup.inputs = Tensor::matrix(2, d_in);
    dup.targets = Tensor::matrix(2, d_out);
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t j = 0; j < d_in; ++j) dup.inputs(r, j) = c.batch.inputs(0, j);
      for (std::size_t j = 0; j < d_out; ++j) dup.targets(r, j) = c.batch.targets(0, j);
    }
    auto obs = backward_per_sample(c.model, c.params.values, dup);
    for (std::size_t j = 0; j < obs.dim(); ++j) CHECK(obs.sample_grads(0, j) == obs.sample_grads(1, j));
  }
  SUBCASE("random MLPs: finite differences, mean-of-rows, per-sample rows") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; ++trial) {
      auto c = random_mlp_case(rng);
      auto obs = backward_per_sample(c.model, c.params.values, c.batch);
      auto fd = fd_gradient(c.model, c.params.values, c.batch);
      CHECK(rel_err(obs.batch_grad, fd) <= 1e-6);

      std::vector<double> mean(obs.dim(), 0.0);
      for (std::size_t n = 0; n < obs.batch_size(); ++n)
        for (std::size_t j = 0; j < obs.dim(); ++j) mean[j] += obs.sample_grads(n, j);
      for (double& x : mean) x /= static_cast<double>(obs.batch_size());
      CHECK(rel_err(mean, obs.batch_grad) <= 1e-12);

      // row n is the gradient of the single-sample batch {n}
      const std::size_t n = obs.batch_size() - 1;
      Batch single{Tensor::matrix(1, c.batch.inputs.cols(),
                                  {c.batch.inputs.row_view(n).begin(), c.batch.inputs.row_view(n).end()}),
                   Tensor::matrix(1, c.batch.targets.cols(),
                                  {c.batch.targets.row_view(n).begin(), c.batch.targets.row_view(n).end()})};
      auto one = backward_batch(c.model, c.params.values, single);
      CHECK(rel_err(obs.sample_grad(n), one.batch_grad) <= 1e-12);
    }
  }
  SUBCASE("plain and per-sample paths agree bit for bit") {
    std::mt19937_64 rng(3);
    auto c = random_mlp_case(rng);
    auto a = backward_batch(c.model, c.params.values, c.batch);
    auto b = backward_per_sample(c.model, c.params.values, c.batch);
    CHECK(a.batch_grad == b.batch_grad);
    CHECK(a.batch_loss == b.batch_loss);
    CHECK_FALSE(a.has_sample_grads());
  }
  SUBCASE("determinism") {
    std::mt19937_64 r1(8), r2(8);
    auto c1 = random_mlp_case(r1);
    auto c2 = random_mlp_case(r2);
    CHECK(backward_per_sample(c1.model, c1.params.values, c1.batch) ==
          backward_per_sample(c2.model, c2.params.values, c2.batch));
  }
}

TEST_CASE("hessian_vector_product") {
  QuadraticObjective quad(Tensor::matrix(2, 2, {1, 0, 0, 2}));
  const std::vector<double> theta{0.7, -0.2};
  SUBCASE("zero direction") {
    auto hv = hessian_vector_product(quad, theta, quadratic_batch(2), std::vector<double>{0, 0});
    CHECK(hv == std::vector<double>{0, 0});
  }
  SUBCASE("quadratic diag(1,2), v=(1,1) -> (1,2)") {
    auto hv = hessian_vector_product(quad, theta, quadratic_batch(2), std::vector<double>{1, 1});
    CHECK(hv[0] == doctest::Approx(1.0));
    CHECK(hv[1] == doctest::Approx(2.0));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(hessian_vector_product(quad, theta, quadratic_batch(2), std::vector<double>{1}),
                    DimensionError);
  }
  SUBCASE("random MLPs vs dense reference; symmetry and linearity") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 15; ++trial) {
      auto c = random_mlp_case(rng, 200);
      auto probe = make_curvature_probe(c.model, c.params.values, c.batch);
      Tensor dense = dense_hessian_reference(c.model, c.params.values, c.batch);
      for (int k = 0; k < 4; ++k) {
        auto u = random_vector(rng, probe.dim());
        auto v = random_vector(rng, probe.dim());
        auto hu = probe.hvp(u);
        auto hv = probe.hvp(v);
        CHECK(rel_err(hv, matvec(dense, v), 1e-8) <= 1e-6);

        double uhv = 0, vhu = 0;
        for (std::size_t j = 0; j < u.size(); ++j) {
          uhv += u[j] * hv[j];
          vhu += v[j] * hu[j];
        }
        CHECK(std::abs(uhv - vhu) <= 1e-10 * std::max({std::abs(uhv), 1.0}));

        std::vector<double> combo(u.size());
        for (std::size_t j = 0; j < u.size(); ++j) combo[j] = 2.5 * u[j] - 0.75 * v[j];
        auto hc = probe.hvp(combo);
        std::vector<double> expect(u.size());
        for (std::size_t j = 0; j < u.size(); ++j) expect[j] = 2.5 * hu[j] - 0.75 * hv[j];
        CHECK(rel_err(hc, expect, 1e-8) <= 1e-10);
      }
    }
  }
}

TEST_CASE("hessian_diagonal") {
  SUBCASE("quadratic diag(1,2)") {
    QuadraticObjective quad(Tensor::matrix(2, 2, {1, 0, 0, 2}));
    auto d = hessian_diagonal(quad, std::vector<double>{3, 4}, quadratic_batch(2, 3));
    CHECK(d[0] == doctest::Approx(1.0));
    CHECK(d[1] == doctest::Approx(2.0));
  }
  SUBCASE("dead relu layer zeroes downstream weight curvature") {
    Model m = Model::mlp({2, 3, 2}, ActivationKind::kRelu, LossKind::kCrossEntropy);
    ParamVector p = m.init(1);
    // push every first-layer pre-activation negative
    const auto& b0 = m.layout().blocks()[1];
    for (std::size_t j = 0; j < b0.length; ++j) p.values[b0.offset + j] = -50.0;
    Batch batch{Tensor::matrix(2, 2, {0.1, 0.2, -0.3, 0.4}), Tensor::matrix(2, 1, {0, 1})};
    auto d = hessian_diagonal(m, p.values, batch);
    for (const auto& block : m.layout().blocks()) {
      if (block.name == "dense1.bias") continue;  // output bias still curves the loss
      for (std::size_t j = 0; j < block.length; ++j) CHECK(d[block.offset + j] == 0.0);
    }
  }
  SUBCASE("random MLPs vs dense reference diagonal, trace == sum(diag)") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 10; ++trial) {
      auto c = random_mlp_case(rng, 150);
      auto d = hessian_diagonal(c.model, c.params.values, c.batch);
      Tensor dense = dense_hessian_reference(c.model, c.params.values, c.batch);
      std::vector<double> ref(d.size());
      for (std::size_t j = 0; j < d.size(); ++j) ref[j] = dense(j, j);
      CHECK(rel_err(d, ref, 1e-8) <= 1e-6);

      auto probe = make_curvature_probe(c.model, c.params.values, c.batch);
      double sum = 0.0;
      for (double x : probe.diag()) sum += x;
      CHECK(rel_err(probe.trace(), sum) <= 1e-12);
    }
  }
  SUBCASE("cap refuses large models") {
    Model m = Model::mlp({20, 20, 2}, ActivationKind::kTanh, LossKind::kCrossEntropy);
    ParamVector p = m.init(0);
    Batch batch{Tensor::matrix(1, 20), Tensor::matrix(1, 1)};
    CHECK_THROWS_AS(hessian_diagonal(m, p.values, batch, 100), CapacityError);
  }
  SUBCASE("Monte Carlo estimator is unbiased on a diagonal matrix") {
    CurvatureOptions opts;
    opts.mode = DiagMode::kMonteCarlo;
    opts.mc_samples = 1;
    auto probe = CurvatureProbe::from_matrix(Tensor::matrix(2, 2, {3, 0, 0, -1}), opts);
    // z_j^2 = 1, so a diagonal matrix is recovered exactly by one probe
    CHECK(probe.diag()[0] == doctest::Approx(3.0));
    CHECK(probe.diag()[1] == doctest::Approx(-1.0));
  }
}

TEST_CASE("dense_hessian_reference") {
  SUBCASE("quadratic gives A") {
    Tensor a = Tensor::matrix(3, 3, {2, 0.5, 0, 0.5, 1, -0.2, 0, -0.2, 3});
    QuadraticObjective quad(a);
    Tensor h = dense_hessian_reference(quad, std::vector<double>{0.1, 0.2, 0.3}, quadratic_batch(3, 2));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(h(i, j) == doctest::Approx(a(i, j)).epsilon(1e-8));
  }
  SUBCASE("symmetric on random MLPs") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 5; ++trial) {
      auto c = random_mlp_case(rng, 120);
      Tensor h = dense_hessian_reference(c.model, c.params.values, c.batch);
      double scale = 1.0;
      for (double x : h.data()) scale = std::max(scale, std::abs(x));
      for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(h(i, j) - h(j, i)) <= 1e-8 * scale);
    }
  }
  SUBCASE("linear least squares: eigenvalues of (2/N) X^T X") {
    std::mt19937_64 rng(7);
    const std::size_t n = 12, d = 4;
    Model m({Dense{d, 1, true}}, LossKind::kMse);
    Batch batch{Tensor::matrix(n, d), Tensor::matrix(n, 1)};
    std::normal_distribution<double> normal;
    for (double& x : batch.inputs.data()) x = normal(rng);
    for (double& y : batch.targets.data()) y = normal(rng);
    Tensor h = dense_hessian_reference(m, m.init(1).values, batch);

    Eigen::MatrixXd xt(n, d + 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) xt(i, j) = batch.inputs(i, j);
      xt(i, d) = 1.0;
    }
    Eigen::MatrixXd closed = (2.0 / n) * xt.transpose() * xt;
    Eigen::MatrixXd numeric(d + 1, d + 1);
    for (std::size_t i = 0; i <= d; ++i)
      for (std::size_t j = 0; j <= d; ++j) numeric(i, j) = h(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(closed), e2(numeric);
    for (std::size_t i = 0; i <= d; ++i) {
      CHECK(e2.eigenvalues()(i) == doctest::Approx(e1.eigenvalues()(i)).epsilon(1e-7));
    }
  }
  SUBCASE("cap") {
    Model m = Model::mlp({30, 20, 2}, ActivationKind::kTanh, LossKind::kCrossEntropy);
    Batch batch{Tensor::matrix(1, 30), Tensor::matrix(1, 1)};
    CHECK_THROWS_AS(dense_hessian_reference(m, m.init(0).values, batch), CapacityError);
  }
}

TEST_CASE("backward_projected") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    auto c = random_mlp_case(rng);
    const auto d = random_vector(rng, c.params.values.size());
    const auto full = backward_per_sample(c.model, c.params.values, c.batch);
    const auto proj = backward_projected(c.model, c.params.values, c.batch, d);
    CHECK_FALSE(proj.has_sample_grads());
    CHECK(proj.batch_grad == full.batch_grad);
    CHECK(proj.sample_losses == full.sample_losses);
    REQUIRE(proj.sample_projections.size() == full.batch_size());
    for (std::size_t n = 0; n < full.batch_size(); ++n) {
      double dot = 0.0, scale = 0.0;
      auto g = full.sample_grad(n);
      for (std::size_t j = 0; j < g.size(); ++j) {
        dot += g[j] * d[j];
        scale += std::abs(g[j] * d[j]);
      }
      CHECK(std::abs(proj.sample_projections[n] - dot) <= 1e-12 * std::max(scale, 1e-300));
    }
    const auto both = backward_projected(c.model, c.params.values, c.batch, d, true, backward_batch(c.model, c.params.values, c.batch));
    CHECK(both.sample_grads == full.sample_grads);
    CHECK(both.sample_projections == proj.sample_projections);
  }
  QuadraticObjective quad(Tensor::matrix(2, 2, {1, 0, 0, 2}));
  CHECK_THROWS_AS(backward_projected(quad, std::vector<double>{0.0, 0.0}, quadratic_batch(2), std::vector<double>{1.0}),
                  DimensionError);
}

TEST_CASE("per-sample storage reuse") {
  std::mt19937_64 rng(23);
  auto c = random_mlp_case(rng);
  auto first = backward_per_sample(c.model, c.params.values, c.batch);
  const auto expected = backward_per_sample(c.model, c.params.values, c.batch);
  for (double& x : first.sample_grads.data()) x = 7.0;  // stale contents must not leak
  const auto again = backward_per_sample(c.model, c.params.values, c.batch, std::move(first));
  CHECK(again == expected);
}
