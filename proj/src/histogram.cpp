// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/histogram.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "trainscope/errors.hpp"

namespace trainscope {

void BinRange::validate() const {
  if (bins == 0) throw ConfigError("histogram: bins must be >= 1");
  if (bins > kMaxBins) throw ConfigError("histogram: too many bins");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw ConfigError("histogram: range must satisfy lo < hi");
  }
}

std::vector<double> BinRange::edges() const {
  std::vector<double> e(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) e[i] = lo + static_cast<double>(i) * width;
  e[bins] = hi;
  return e;
}

namespace {

constexpr std::size_t kChunk = 1024;

#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define TRAINSCOPE_VECTOR_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define TRAINSCOPE_VECTOR_CLONES
#endif

// Branch-free bin lookup; with trapping math off the loop vectorizes. The
// guess (x - lo) / width is off by at most one bin, and only next to an edge,
// so one comparison with each neighbouring edge (as returned by edges())
// makes lookups agree with the edges exactly. NaN lands in bin 0.
TRAINSCOPE_VECTOR_CLONES
void locate(const double* __restrict values, std::int32_t* __restrict out, std::size_t n, const BinRange& r) {
  const double lo = r.lo;
  const double width = (r.hi - r.lo) / static_cast<double>(r.bins);
  const double inverse = static_cast<double>(r.bins) / (r.hi - r.lo);
  const auto last = static_cast<std::int32_t>(r.bins - 1);
  const double last_d = static_cast<double>(last);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = values[k];
    double g = (x - lo) * inverse;
    g = g >= 0.0 ? g : 0.0;
    g = g <= last_d ? g : last_d;
    const auto i = static_cast<std::int32_t>(g);
    const double di = static_cast<double>(i);
    const std::int32_t down = (x <= lo + di * width) & (i > 0);
    const std::int32_t up = (x > lo + (di + 1.0) * width) & (i < last);
    out[k] = i - down + up;
  }
}

}  // namespace

std::size_t BinRange::index(double x) const {
  std::int32_t i = 0;
  locate(&x, &i, 1, *this);
  return static_cast<std::size_t>(i);
}

void bin_indices(std::span<const double> values, const BinRange& range, std::span<std::int32_t> out) {
  range.validate();
  if (out.size() != values.size()) throw DimensionError("histogram: index buffer length mismatch");
  locate(values.data(), out.data(), values.size(), range);
}

void accumulate_histogram(std::span<const double> values, const BinRange& range, std::span<std::int64_t> counts) {
  range.validate();
  if (counts.size() != range.bins) throw DimensionError("histogram: count buffer length mismatch");
  // four interleaved tallies so that runs of equal bins do not serialize
  std::vector<std::int64_t> tally(4 * range.bins, 0);
  std::array<std::int32_t, kChunk> idx;
  for (std::size_t start = 0; start < values.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, values.size() - start);
    locate(values.data() + start, idx.data(), m, range);
    std::size_t k = 0;
    for (; k + 4 <= m; k += 4) {
      ++tally[4 * idx[k]];
      ++tally[4 * idx[k + 1] + 1];
      ++tally[4 * idx[k + 2] + 2];
      ++tally[4 * idx[k + 3] + 3];
    }
    for (; k < m; ++k) ++tally[4 * idx[k]];
  }
  for (std::size_t b = 0; b < range.bins; ++b) {
    counts[b] += tally[4 * b] + tally[4 * b + 1] + tally[4 * b + 2] + tally[4 * b + 3];
  }
}

std::int64_t Hist1d::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::int64_t Hist2d::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

Hist1d histogram_1d(std::span<const double> values, const BinRange& range) {
  range.validate();
  Hist1d h{range.edges(), std::vector<std::int64_t>(range.bins, 0)};
  accumulate_histogram(values, range, h.counts);
  return h;
}

BinRange adaptive_range(std::span<const double> values, std::size_t bins) {
  double lo = INFINITY, hi = -INFINITY;
  for (double x : values) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(lo <= hi)) return BinRange{-1.0, 1.0, bins};
  if (lo == hi) return BinRange{lo - 0.5, hi + 0.5, bins};
  return BinRange{lo, hi, bins};
}

}  // namespace trainscope
