// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

ad::Var block_leaf(std::span<const double> params, const ParamBlock& block, bool with_grad) {
  const std::size_t rows = block.shape.size() == 2 ? block.shape[0] : 1;
  const std::size_t cols = block.shape.back();
  auto slice = params.subspan(block.offset, block.length);
  return ad::leaf(Tensor::matrix(rows, cols, std::vector<double>(slice.begin(), slice.end())),
                  with_grad);
}

void check_params(std::span<const double> params, const ParamLayout& layout) {
  if (params.size() != layout.dim()) {
    throw DimensionError("parameter vector has length " + std::to_string(params.size()) +
                         ", objective expects " + std::to_string(layout.dim()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw NumericError("non-finite parameter value");
  }
}

ad::Var apply_activation(const ad::Var& z, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kRelu:
      return ad::relu(z);
    case ActivationKind::kSigmoid:
      return ad::sigmoid(z);
    case ActivationKind::kTanh:
      return ad::tanh(z);
    case ActivationKind::kIdentity:
      return z;
  }
  return z;
}

}  // namespace

ParamLayout::ParamLayout(std::vector<ParamBlock> blocks) {
  for (auto& b : blocks) {
    if (b.offset != dim_) throw DimensionError("param layout: blocks must be contiguous");
    if (product(b.shape) != b.length) throw DimensionError("param layout: shape/length mismatch");
    dim_ += b.length;
    blocks_.push_back(std::move(b));
  }
}

void ParamLayout::append(std::string name, std::size_t layer, std::vector<std::size_t> shape) {
  const std::size_t length = product(shape);
  blocks_.push_back(ParamBlock{std::move(name), layer, dim_, length, std::move(shape)});
  dim_ += length;
}

std::vector<LayerRange> ParamLayout::layers() const {
  std::vector<LayerRange> out;
  for (const auto& b : blocks_) {
    if (!out.empty() && out.back().layer == b.layer) {
      out.back().length += b.length;
    } else {
      out.push_back(LayerRange{b.layer, b.offset, b.length});
    }
  }
  return out;
}

Model::Model(std::vector<Layer> layers, LossKind loss) : layers_(std::move(layers)), loss_(loss) {
  std::size_t dense_index = 0;
  std::size_t width = 0;
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<Dense>(&layer)) {
      if (d->in == 0 || d->out == 0) throw DimensionError("model: dense layer with zero extent");
      if (dense_index == 0) {
        input_dim_ = d->in;
      } else if (d->in != width) {
        throw DimensionError("model: dense layer " + std::to_string(dense_index) + " expects " +
                             std::to_string(d->in) + " inputs but previous layer emits " +
                             std::to_string(width));
      }
      const std::string prefix = "dense" + std::to_string(dense_index);
      layout_.append(prefix + ".weight", dense_index, {d->in, d->out});
      if (d->bias) layout_.append(prefix + ".bias", dense_index, {d->out});
      width = d->out;
      ++dense_index;
    }
  }
  if (dense_index == 0) throw DimensionError("model: needs at least one dense layer");
  output_dim_ = width;
  if (loss_ == LossKind::kCrossEntropy && output_dim_ < 2) {
    throw DimensionError("model: cross-entropy needs at least two output classes");
  }
}

Model Model::mlp(const std::vector<std::size_t>& widths, ActivationKind act, LossKind loss) {
  if (widths.size() < 2) throw DimensionError("mlp: needs input and output widths");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(Dense{widths[i], widths[i + 1], true});
    if (i + 2 < widths.size()) layers.emplace_back(Activation{act});
  }
  return Model(std::move(layers), loss);
}

void Model::check_batch(const Batch& batch) const {
  if (batch.inputs.rank() != 2 || batch.inputs.rows() == 0) {
    throw DimensionError("batch: inputs must be a non-empty |B| x d_in matrix");
  }
  if (batch.inputs.cols() != input_dim_) {
    throw DimensionError("batch: input width " + std::to_string(batch.inputs.cols()) +
                         " does not match model input " + std::to_string(input_dim_));
  }
  if (batch.targets.rows() != batch.inputs.rows()) {
    throw DimensionError("batch: inputs and targets have different leading extents");
  }
  if (loss_ == LossKind::kMse) {
    if (batch.targets.cols() != output_dim_) {
      throw DimensionError("batch: MSE targets must have " + std::to_string(output_dim_) +
                           " columns");
    }
  } else if (batch.targets.cols() == 1) {
    for (double c : batch.targets.data()) {
      if (c < 0 || c >= static_cast<double>(output_dim_) || c != std::floor(c)) {
        throw DimensionError("batch: class index out of range");
      }
    }
  } else if (batch.targets.cols() != output_dim_) {
    throw DimensionError("batch: cross-entropy targets must be indices or one-hot rows");
  }
  if (!batch.inputs.all_finite() || !batch.targets.all_finite()) {
    throw NumericError("batch: non-finite input or target");
  }
}

LossGraph Model::trace(std::span<const double> params, const Batch& batch, bool with_grad) const {
  check_params(params, layout_);
  check_batch(batch);
  const std::size_t n = batch.size();

  LossGraph graph;
  const auto& blocks = layout_.blocks();
  std::size_t next_block = 0;
  ad::Var act = ad::constant(batch.inputs);
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<Dense>(&layer)) {
      const std::size_t w_index = next_block++;
      ad::Var w = block_leaf(params, blocks[w_index], with_grad);
      graph.leaves.push_back(w);
      ad::Var z = ad::matmul(act, w);
      graph.rules.push_back({PerSampleRule::Kind::kOuter, w_index, z, act.value()});
      if (d->bias) {
        const std::size_t b_index = next_block++;
        ad::Var b = block_leaf(params, blocks[b_index], with_grad);
        graph.leaves.push_back(b);
        ad::Var broadcast = ad::expand_rows(b, n);
        graph.rules.push_back({PerSampleRule::Kind::kRows, b_index, broadcast, Tensor{}});
        z = ad::add(z, broadcast);
      }
      act = z;
    } else {
      act = apply_activation(act, std::get<Activation>(layer).kind);
    }
  }

  if (loss_ == LossKind::kMse) {
    ad::Var residual = ad::sub(act, ad::constant(batch.targets));
    graph.sample_losses = ad::scale(ad::sum_cols(ad::mul(residual, residual)),
                                    1.0 / static_cast<double>(output_dim_));
  } else {
    Tensor onehot = batch.targets;
    if (batch.targets.cols() == 1) {
      onehot = Tensor::matrix(n, output_dim_);
      for (std::size_t i = 0; i < n; ++i) {
        onehot(i, static_cast<std::size_t>(batch.targets(i, 0))) = 1.0;
      }
    }
    ad::Var picked = ad::sum_cols(ad::mul(act, ad::constant(std::move(onehot))));
    graph.sample_losses = ad::sub(ad::logsumexp_cols(act), picked);
  }
  return graph;
}

ParamVector Model::init(std::uint64_t seed, const InitOptions& options) const {
  ParamVector p{std::vector<double>(layout_.dim(), 0.0), layout_};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& block : layout_.blocks()) {
    const bool is_weight = block.shape.size() == 2;
    if (is_weight) {
      double gain = options.weight_gain;
      if (block.layer < options.layer_weight_gain.size()) gain = options.layer_weight_gain[block.layer];
      const double stddev = gain / std::sqrt(static_cast<double>(block.shape[0]));
      for (std::size_t i = 0; i < block.length; ++i) {
        p.values[block.offset + i] = stddev * normal(rng);
      }
    } else {
      for (std::size_t i = 0; i < block.length; ++i) {
        p.values[block.offset + i] = options.bias_value;
      }
    }
  }
  return p;
}

QuadraticObjective::QuadraticObjective(Tensor curvature) : curvature_(std::move(curvature)) {
  if (curvature_.rank() != 2 || curvature_.rows() != curvature_.cols() || curvature_.rows() == 0) {
    throw DimensionError("quadratic: curvature must be a non-empty square matrix");
  }
  layout_.append("theta", 0, {curvature_.rows()});
}

void QuadraticObjective::check_batch(const Batch& batch) const {
  if (batch.inputs.rank() != 2 || batch.inputs.rows() == 0) {
    throw DimensionError("batch: quadratic needs a non-empty |B| x D matrix of centers");
  }
  if (batch.inputs.cols() != curvature_.rows()) {
    throw DimensionError("batch: center width does not match quadratic dimension");
  }
  if (!batch.inputs.all_finite()) throw NumericError("batch: non-finite center");
}

LossGraph QuadraticObjective::trace(std::span<const double> params, const Batch& batch,
                                    bool with_grad) const {
  check_params(params, layout_);
  check_batch(batch);
  LossGraph graph;
  ad::Var theta = block_leaf(params, layout_.blocks()[0], with_grad);
  graph.leaves.push_back(theta);
  ad::Var broadcast = ad::expand_rows(theta, batch.size());
  graph.rules.push_back({PerSampleRule::Kind::kRows, 0, broadcast, Tensor{}});
  ad::Var residual = ad::sub(broadcast, ad::constant(batch.inputs));
  ad::Var projected = ad::matmul(residual, ad::constant(curvature_));
  graph.sample_losses = ad::scale(ad::sum_cols(ad::mul(residual, projected)), 0.5);
  return graph;
}

}  // namespace trainscope
