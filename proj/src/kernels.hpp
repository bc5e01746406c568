// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reductions over per-sample gradient rows. Four partial sums break the
// floating-point add dependency chain.

#pragma once

#include <cstddef>
#include <span>

namespace trainscope::kernels {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

/// sum_j (a_j - c b_j)^2
inline double residual_squared(std::span<const double> a, double c, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const double r0 = a[j] - c * b[j], r1 = a[j + 1] - c * b[j + 1];
    const double r2 = a[j + 2] - c * b[j + 2], r3 = a[j + 3] - c * b[j + 3];
    s0 += r0 * r0;
    s1 += r1 * r1;
    s2 += r2 * r2;
    s3 += r3 * r3;
  }
  for (; j < n; ++j) {
    const double r = a[j] - c * b[j];
    s0 += r * r;
  }
  return (s0 + s1) + (s2 + s3);
}

}  // namespace trainscope::kernels
