#pragma once

#include <vector>

#include "dydec/autodiff.hpp"
#include "dydec/model.hpp"

// Differentiable building blocks. Each op computes its forward value for the whole batch
// and records a backward closure that accumulates into input gradients and into the
// matching fields of a parameter-gradient model (same structure as the model).
namespace dydec::ops {

Var egnorm(GradTape& tape, const Var& x, const EgNormParams& p, EgNormParams& grad);
/// Standardizes with statistics over every item and sample (training) or running stats.
Var batchnorm(GradTape& tape, const Var& x, const BatchNormStats& running, bool training,
              BatchNormStats* batch_stats);
Var sinc_filter(GradTape& tape, const Var& x, const SincBandPass& filter, Taper taper, SincBandPass& grad);
Var add(GradTape& tape, const Var& a, const Var& b);
Var decimate(GradTape& tape, const Var& x, int factor);
/// Stacks 1 x T rows into a [rows x T] map per batch item.
Var stack_rows(GradTape& tape, const std::vector<Var>& rows);
Var channel_pool(GradTape& tape, const Var& x, const BackboneLayer& layer, int lowpass_len, BackboneLayer& grad);
Var cross_conv_relu(GradTape& tape, const Var& x, const BackboneLayer& layer, BackboneLayer& grad);
/// softplus(w^T h + b) per frame -> 1 x T.
Var frame_head(GradTape& tape, const Var& h, const Vector& weight, double bias, Vector& grad_weight,
               double& grad_bias);

}  // namespace dydec::ops

namespace dydec {

/// Batch statistics observed at one tree node during a batch-norm training pass.
struct NodeStats {
  int depth = 0;
  int index = 0;
  BatchNormStats stats;
};

struct FrontendOutputs {
  Var tf;  ///< [bins x frames] per item
  std::vector<NodeStats> bn_batch;
};

FrontendOutputs frontend_graph(GradTape& tape, const Model& model, Model& grads, const Var& input, bool training);
Var backbone_graph(GradTape& tape, const Model& model, Model& grads, const Var& tf);

}  // namespace dydec
