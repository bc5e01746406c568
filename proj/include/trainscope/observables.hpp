// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// First- and second-order information of the mini-batch loss: per-sample
// losses and gradients, Hessian-vector products, and the Hessian diagonal.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "trainscope/model.hpp"
#include "trainscope/tensor.hpp"

namespace trainscope {

/// Losses and gradients for one mini-batch at one parameter point.
///
/// `sample_grads` is |B| x D and may be empty when only the mean gradient was
/// requested. `batch_grad` is always present. `sample_projections` holds
/// g_n^T d for a direction d when one was requested.
struct BatchObservables {
  std::vector<double> sample_losses;
  Tensor sample_grads;
  std::vector<double> sample_projections;
  std::vector<double> batch_grad;
  double batch_loss = 0.0;
  ParamLayout layout;

  std::size_t batch_size() const { return sample_losses.size(); }
  std::size_t dim() const { return batch_grad.size(); }
  bool has_sample_grads() const { return sample_grads.size() > 0; }
  std::span<const double> sample_grad(std::size_t n) const { return sample_grads.row_view(n); }

  friend bool operator==(const BatchObservables&, const BatchObservables&) = default;
};

struct ForwardResult {
  std::vector<double> sample_losses;
  double batch_loss = 0.0;
};

ForwardResult forward_batch(const Objective& objective, std::span<const double> params,
                            const Batch& batch);

/// Batch loss and mean gradient only (sample_grads left empty).
BatchObservables backward_batch(const Objective& objective, std::span<const double> params,
                                const Batch& batch);

/// Batch loss, mean gradient, and the |B| x D matrix of per-sample gradients.
/// The mean gradient is bit-identical to the one from backward_batch.
BatchObservables backward_per_sample(const Objective& objective, std::span<const double> params,
                                     const Batch& batch);

/// As above, writing the per-sample matrix into `recycled.sample_grads` when
/// its shape fits. Saves a large allocation per call in training loops.
BatchObservables backward_per_sample(const Objective& objective, std::span<const double> params,
                                     const Batch& batch, BatchObservables&& recycled);

/// Batch loss, mean gradient and the projections g_n^T direction, computed
/// without forming the per-sample matrix unless `keep_sample_grads` is set.
BatchObservables backward_projected(const Objective& objective, std::span<const double> params,
                                    const Batch& batch, std::span<const double> direction,
                                    bool keep_sample_grads = false, BatchObservables&& recycled = {});

enum class DiagMode { kExact, kMonteCarlo };

struct CurvatureOptions {
  DiagMode mode = DiagMode::kExact;
  std::size_t mc_samples = 1;
  std::uint64_t seed = 0;
  std::size_t diag_cap = 5000;
};

/// Matrix-free access to the Hessian of the batch loss.
///
/// The diagonal is computed on first use and cached; probes are cheap to copy
/// and safe to share across threads.
class CurvatureProbe {
 public:
  using HvpFn = std::function<std::vector<double>(std::span<const double>)>;

  CurvatureProbe(std::size_t dim, HvpFn hvp, ParamLayout layout = {}, CurvatureOptions options = {});

  /// Probe for an explicit symmetric matrix (used by tests and tools).
  static CurvatureProbe from_matrix(const Tensor& matrix, CurvatureOptions options = {});

  std::size_t dim() const { return dim_; }
  const ParamLayout& layout() const { return layout_; }
  const CurvatureOptions& options() const { return options_; }

  std::vector<double> hvp(std::span<const double> v) const;
  const std::vector<double>& diag() const;
  double trace() const;
  bool diag_is_estimate() const { return options_.mode == DiagMode::kMonteCarlo; }

 private:
  struct Cache;
  std::size_t dim_;
  HvpFn hvp_;
  ParamLayout layout_;
  CurvatureOptions options_;
  std::shared_ptr<Cache> cache_;
};

/// Builds the double-backward graph once; every hvp() call reuses it.
CurvatureProbe make_curvature_probe(const Objective& objective, std::span<const double> params,
                                    const Batch& batch, CurvatureOptions options = {});

std::vector<double> hessian_vector_product(const Objective& objective,
                                           std::span<const double> params, const Batch& batch,
                                           std::span<const double> v);

/// Exact diagonal from D basis-vector products. Throws CapacityError above `cap`.
std::vector<double> hessian_diagonal(const Objective& objective, std::span<const double> params,
                                     const Batch& batch, std::size_t cap = 5000);

/// Dense D x D Hessian from central differences of the batch gradient.
/// Test oracle only; refuses D > cap.
Tensor dense_hessian_reference(const Objective& objective, std::span<const double> params,
                               const Batch& batch, double step = 1e-5, std::size_t cap = 500);

}  // namespace trainscope
