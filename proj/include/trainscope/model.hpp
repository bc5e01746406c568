// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trainscope/autodiff.hpp"
#include "trainscope/tensor.hpp"

namespace trainscope {

/// One named parameter tensor inside the flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::vector<std::size_t> shape;

  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// Contiguous [offset, offset + length) range covered by one layer.
struct LayerRange {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Offsets of every parameter block in the flat vector. Blocks are contiguous,
/// non-overlapping and cover [0, D).
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<ParamBlock> blocks);

  /// Appends a block right after the last one.
  void append(std::string name, std::size_t layer, std::vector<std::size_t> shape);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t dim() const { return dim_; }
  std::vector<LayerRange> layers() const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t dim_ = 0;
};

struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;

  std::size_t dim() const { return values.size(); }
};

/// A mini-batch. For cross-entropy, targets may be a |B|x1 column of class
/// indices or a |B|xC one-hot/probability matrix.
struct Batch {
  Tensor inputs;
  Tensor targets;

  std::size_t size() const { return inputs.rows(); }
};

/// Per-sample gradients of a parameter block, read off intermediate gradients.
///
/// kRows: row n of d(sum loss)/d(node) is the block's gradient for sample n
///        (broadcast biases, broadcast parameter vectors).
/// kOuter: the block is a (in x out) weight applied as Z = A W; sample n's
///         gradient is the outer product A_n (x) dZ_n.
struct PerSampleRule {
  enum class Kind { kRows, kOuter };
  Kind kind = Kind::kRows;
  std::size_t block = 0;
  ad::Var node;
  Tensor input;
};

/// Computation graph of the per-sample losses at one parameter point.
struct LossGraph {
  std::vector<ad::Var> leaves;  // one per ParamBlock, in layout order
  ad::Var sample_losses;        // |B| x 1
  std::vector<PerSampleRule> rules;
};

/// Anything that maps (parameters, batch) to per-sample losses.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual const ParamLayout& layout() const = 0;
  /// Throws DimensionError for batches that do not fit the objective.
  virtual void check_batch(const Batch& batch) const = 0;
  /// Builds the loss graph. Leaves require gradients only if `with_grad`.
  virtual LossGraph trace(std::span<const double> params, const Batch& batch,
                          bool with_grad) const = 0;

  std::size_t dim() const { return layout().dim(); }
};

enum class ActivationKind { kRelu, kSigmoid, kTanh, kIdentity };
enum class LossKind { kMse, kCrossEntropy };

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;
};

struct Activation {
  ActivationKind kind = ActivationKind::kIdentity;
};

using Layer = std::variant<Dense, Activation>;

/// Initialization for Dense layers: weights ~ N(0, (gain / sqrt(in))^2),
/// biases constant. Per-layer overrides apply by Dense index.
struct InitOptions {
  double weight_gain = 1.0;
  double bias_value = 0.0;
  std::vector<double> layer_weight_gain;  // optional, by Dense index
};

/// Chain of dense layers and activations with an MSE or softmax cross-entropy
/// loss. MSE uses mean reduction over output units, so a sample's loss is the
/// mean squared residual and the batch loss the mean over samples.
class Model final : public Objective {
 public:
  Model(std::vector<Layer> layers, LossKind loss);

  /// Convenience: d0-d1-...-dk perceptron with `act` between Dense layers.
  static Model mlp(const std::vector<std::size_t>& widths, ActivationKind act, LossKind loss);

  const ParamLayout& layout() const override { return layout_; }
  void check_batch(const Batch& batch) const override;
  LossGraph trace(std::span<const double> params, const Batch& batch,
                  bool with_grad) const override;

  ParamVector init(std::uint64_t seed, const InitOptions& options = {}) const;

  const std::vector<Layer>& layers() const { return layers_; }
  LossKind loss() const { return loss_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }

 private:
  std::vector<Layer> layers_;
  LossKind loss_;
  ParamLayout layout_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
};

/// Per-sample loss 0.5 (theta - c_n)^T A (theta - c_n), with c_n the batch
/// input rows and A symmetric. Targets are ignored.
class QuadraticObjective final : public Objective {
 public:
  explicit QuadraticObjective(Tensor curvature);

  const ParamLayout& layout() const override { return layout_; }
  void check_batch(const Batch& batch) const override;
  LossGraph trace(std::span<const double> params, const Batch& batch,
                  bool with_grad) const override;

  const Tensor& curvature() const { return curvature_; }

 private:
  Tensor curvature_;
  ParamLayout layout_;
};

}  // namespace trainscope
