// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fixed-range histograms. Bins are left-open and right-closed, (e_i, e_{i+1}],
// except that the first bin also takes e_0. Values outside the range fall into
// the nearest boundary bin, so every element is counted.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace trainscope {

struct BinRange {
  static constexpr std::size_t kMaxBins = std::size_t{1} << 30;

  double lo = -1.0;
  double hi = 1.0;
  std::size_t bins = 50;

  /// Throws ConfigError unless lo < hi, both finite, and 1 <= bins <= kMaxBins.
  void validate() const;
  std::vector<double> edges() const;
  /// Clipping bin lookup; NaN goes to bin 0.
  std::size_t index(double x) const;
};

struct Hist1d {
  std::vector<double> edges;
  std::vector<std::int64_t> counts;

  std::int64_t total() const;
  friend bool operator==(const Hist1d&, const Hist1d&) = default;
};

/// Counts stored x-major: counts[i * y_bins + j] for x-bin i and y-bin j.
struct Hist2d {
  std::vector<double> x_edges;
  std::vector<double> y_edges;
  std::vector<std::int64_t> counts;

  std::size_t x_bins() const { return x_edges.empty() ? 0 : x_edges.size() - 1; }
  std::size_t y_bins() const { return y_edges.empty() ? 0 : y_edges.size() - 1; }
  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * y_bins() + j]; }
  std::int64_t total() const;
  friend bool operator==(const Hist2d&, const Hist2d&) = default;
};

Hist1d histogram_1d(std::span<const double> values, const BinRange& range);

/// out[k] = range.index(values[k]) for every k.
void bin_indices(std::span<const double> values, const BinRange& range, std::span<std::int32_t> out);

/// Adds the bin counts of `values` to `counts` (length range.bins).
void accumulate_histogram(std::span<const double> values, const BinRange& range, std::span<std::int64_t> counts);

/// Range spanning [min, max] of `values`; widened by 0.5 on each side when
/// the values are all equal, and [-1, 1] for an empty or non-finite input.
BinRange adaptive_range(std::span<const double> values, std::size_t bins);

}  // namespace trainscope
