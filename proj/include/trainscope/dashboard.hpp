// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static SVG dashboard. A 3x3 grid of panels:
//   left:   Alpha distribution, Distance / UpdateSize, GradNorm
//   center: gradient tests, 1-D gradient histogram, 2-D histogram
//   right:  HessMaxEV, HessTrace, TICDiag
// and a bottom strip with the loss curve and the learning rate. Panels whose
// quantities are absent show a "not tracked" placeholder. The output depends
// only on the events, so identical logs give identical bytes.

#pragma once

#include <string>
#include <vector>

#include "trainscope/runner.hpp"

namespace trainscope {

struct DashboardOptions {
  /// Share of Alpha values highlighted as "late training".
  double last_fraction = 0.1;
};

/// Number of trailing items in the last `fraction` of `n`: ceil(n * fraction),
/// robust to rounding. Throws ConfigError unless 0 < fraction <= 1.
std::size_t last_fraction_count(std::size_t n, double fraction);

std::string render_dashboard(const std::vector<TrackEvent>& events, const DashboardOptions& options = {});

/// Names the renderer and CSV exporter understand: instrument names, Loss,
/// LearningRate and their per-layer variants.
bool is_known_quantity(const std::string& name);

}  // namespace trainscope
