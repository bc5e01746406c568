// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Naive reference implementations of the instrument quantities. They use
// explicit loops over plain vectors and Eigen for linear algebra, and share no
// code with the library beyond the data containers.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace trainscope::oracle {

using Rows = std::vector<std::vector<double>>;  // |B| rows of length D

inline std::vector<double> mean_row(const Rows& g) {
  std::vector<double> m(g[0].size(), 0.0);
  for (const auto& row : g)
    for (std::size_t j = 0; j < row.size(); ++j) m[j] += row[j];
  for (double& x : m) x /= static_cast<double>(g.size());
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

struct Tests {
  double norm_test, inner_test, ortho_test;
};

// Sample variance forms: Var of g_n over n (norm test), Var of projections
// (inner test), and mean squared orthogonal residual (orthogonality test).
inline Tests gradient_tests(const Rows& g) {
  const double b = static_cast<double>(g.size());
  const auto gb = mean_row(g);
  const double gb2 = dot(gb, gb);
  double var_full = 0.0, var_proj = 0.0, ortho = 0.0;
  for (const auto& row : g) {
    std::vector<double> diff(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) diff[j] = row[j] - gb[j];
    var_full += dot(diff, diff);
    const double p = dot(row, gb) / gb2;  // coefficient of the projection onto g_B
    var_proj += (p - 1.0) * (p - 1.0) * gb2;
    std::vector<double> perp(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) perp[j] = row[j] - p * gb[j];
    ortho += dot(perp, perp);
  }
  var_full /= (b - 1.0);
  var_proj /= (b - 1.0);
  ortho /= (b - 1.0);
  return Tests{std::sqrt(var_full / (b * gb2)), std::sqrt(var_proj / (b * gb2)),
               std::sqrt(ortho / (b * gb2))};
}

inline std::size_t bin_of(double x, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  if (x <= edges[0]) return 0;
  for (std::size_t i = 0; i < bins; ++i) {
    if (x > edges[i] && x <= edges[i + 1]) return i;
  }
  return bins - 1;
}

inline std::vector<double> linear_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> e;
  for (std::size_t i = 0; i < bins; ++i) e.push_back(lo + static_cast<double>(i) * ((hi - lo) / static_cast<double>(bins)));
  e.push_back(hi);
  return e;
}

// Sort, then sweep the edges once.
inline std::vector<std::int64_t> hist1d(std::vector<double> values, double lo, double hi, std::size_t bins) {
  const auto e = linear_edges(lo, hi, bins);
  std::sort(values.begin(), values.end());
  std::vector<std::int64_t> counts(bins, 0);
  std::size_t bin = 0;
  for (double x : values) {
    while (bin + 1 < bins && x > e[bin + 1]) ++bin;
    ++counts[bin];
  }
  return counts;
}

inline std::vector<std::int64_t> hist2d(const std::vector<double>& params, const Rows& g,
                                        const std::vector<double>& x_edges,
                                        const std::vector<double>& y_edges) {
  const std::size_t nx = x_edges.size() - 1, ny = y_edges.size() - 1;
  std::vector<std::int64_t> counts(nx * ny, 0);
  for (const auto& row : g) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      counts[bin_of(params[j], x_edges) * ny + bin_of(row[j], y_edges)] += 1;
    }
  }
  return counts;
}

inline double gsnr(const Rows& g) {
  const double b = static_cast<double>(g.size());
  const std::size_t d = g[0].size();
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const auto& row : g) mean += row[j];
    mean /= b;
    double var = 0.0;
    for (const auto& row : g) var += (row[j] - mean) * (row[j] - mean);
    var /= b;
    total += mean * mean / (var + 1e-12);
  }
  return total / static_cast<double>(d);
}

inline double cabs(const Rows& g, double lr, double loss) {
  const auto gb = mean_row(g);
  double trace = 0.0;
  for (std::size_t j = 0; j < gb.size(); ++j) {
    double var = 0.0;
    for (const auto& row : g) var += (row[j] - gb[j]) * (row[j] - gb[j]);
    trace += var / static_cast<double>(g.size());
  }
  return lr * trace / loss;
}

// 1 - (|B| / D) sum_d g_B,d^2 / sigma_d^2 with the unbiased variance sigma_d^2.
inline double early_stopping(const Rows& g) {
  const double b = static_cast<double>(g.size());
  const auto gb = mean_row(g);
  double snr = 0.0;
  for (std::size_t j = 0; j < gb.size(); ++j) {
    double var = 0.0;
    for (const auto& row : g) var += (row[j] - gb[j]) * (row[j] - gb[j]);
    var /= (b - 1.0);
    snr += gb[j] * gb[j] / (var + 1e-12 / (b - 1.0));
  }
  return 1.0 - b / static_cast<double>(gb.size()) * snr;
}

inline double tic_diag(const Rows& g, const Eigen::MatrixXd& h) {
  double total = 0.0;
  for (std::size_t j = 0; j < g[0].size(); ++j) {
    double second = 0.0;
    for (const auto& row : g) second += row[j] * row[j];
    total += second / static_cast<double>(g.size()) / h(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
  }
  return total;
}

inline double tic_trace(const Rows& g, const Eigen::MatrixXd& h) {
  double second = 0.0;
  for (const auto& row : g) second += dot(row, row);
  return second / static_cast<double>(g.size()) / h.trace();
}

/// Power iteration on an explicit matrix, seeded exactly like the library
/// (mt19937_64 + standard normal start, unit-normalized).
inline double power_iteration(const Eigen::MatrixXd& h, std::size_t max_iters, double rtol,
                              double atol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(h.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  v.normalize();
  double previous = 0.0, lambda = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = h * v;
    lambda = v.dot(w);
    if (w.norm() == 0.0) return lambda;
    if (it > 0 && std::abs(lambda - previous) < rtol * std::abs(lambda) + atol) return lambda;
    previous = lambda;
    v = w / w.norm();
  }
  return lambda;
}

inline double dominant_eigenvalue(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const auto& ev = es.eigenvalues();
  double best = ev(0);
  for (Eigen::Index i = 1; i < ev.size(); ++i)
    if (std::abs(ev(i)) > std::abs(best)) best = ev(i);
  return best;
}

struct AlphaOracle {
  Eigen::Vector3d w;
  double alpha_raw;
};

/// Weighted least squares in the original step coordinate, solved by
/// column-pivoting QR on the square-root-weighted system.
inline AlphaOracle alpha_wls(double step_length, const std::array<double, 4>& obs,
                             const std::array<double, 4>& var, double guard = 1e-12) {
  const double t1 = 0.0, t2 = step_length;
  Eigen::Matrix<double, 3, 4> phi;
  phi << 1, 1, 0, 0, t1, t2, 1, 1, t1 * t1, t2 * t2, 2 * t1, 2 * t2;
  Eigen::Matrix<double, 4, 3> a;
  Eigen::Vector4d f;
  for (int i = 0; i < 4; ++i) {
    const double s = 1.0 / std::sqrt(var[i] + guard);
    a.row(i) = s * phi.col(i).transpose();
    f(i) = s * obs[i];
  }
  Eigen::Vector3d w = a.colPivHouseholderQr().solve(f);
  double alpha;
  if (w(2) > 1e-12) {
    const double tau_star = -w(1) / (2.0 * w(2));
    alpha = step_length / tau_star - 1.0;
  } else {
    alpha = (w(1) + 2.0 * w(2) * step_length) < 0.0 ? -1.0 : 1.0;
  }
  return AlphaOracle{w, alpha};
}

inline std::array<double, 2> mean_popvar(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += v * v;
  return {m, std::max(0.0, s / static_cast<double>(x.size()) - m * m)};
}

}  // namespace trainscope::oracle
