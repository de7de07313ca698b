#include "dydec/graph.hpp"

#include <cmath>
#include <span>

#include "dydec/parallel.hpp"

namespace dydec::ops {

namespace {

Vector row_copy(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

std::span<const double> cspan(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> cspan(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Matrix as_row(const Vector& v) { return Eigen::Map<const Matrix>(v.data(), 1, v.size()); }

}  // namespace

Var egnorm(GradTape& tape, const Var& x, const EgNormParams& p, EgNormParams& grad) {
  const std::size_t batch = x->batch();
  std::vector<Matrix> out(batch);
  parallel_for(batch, [&](std::size_t b) { out[b] = as_row(eg_normalize(row_copy(x->value[b]), p)); });
  Var y = make_var(std::move(out));
  tape.record([x, y, p, &grad, batch] {
    const auto& gy = y->grad_buffer();
    std::vector<EgNormGrad> parts(batch);
    parallel_for(batch, [&](std::size_t b) {
      parts[b] = eg_normalize_vjp(row_copy(x->value[b]), p, row_copy(gy[b]));
    });
    for (std::size_t b = 0; b < batch; ++b) {
      grad.sigma += parts[b].params.sigma;
      grad.alpha += parts[b].params.alpha;
      grad.delta += parts[b].params.delta;
      grad.gamma += parts[b].params.gamma;
    }
    if (x->requires_grad) {
      auto& gx = x->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) gx[b] += as_row(parts[b].input);
    }
  });
  return y;
}

Var batchnorm(GradTape& tape, const Var& x, const BatchNormStats& running, bool training,
              BatchNormStats* batch_stats) {
  const std::size_t batch = x->batch();
  double mean = running.mean;
  double var = running.var;
  if (training) {
    double count = 0.0;
    double sum = 0.0;
    for (const auto& m : x->value) {
      sum += m.sum();
      count += static_cast<double>(m.size());
    }
    mean = sum / count;
    double sq = 0.0;
    for (const auto& m : x->value) sq += (m.array() - mean).square().sum();
    var = sq / count;
    if (batch_stats != nullptr) *batch_stats = {mean, var};
  }
  const double inv = 1.0 / std::sqrt(var + kBatchNormEpsilon);
  std::vector<Matrix> out(batch);
  for (std::size_t b = 0; b < batch; ++b) out[b] = (x->value[b].array() - mean) * inv;
  Var y = make_var(std::move(out));
  tape.record([x, y, inv, training, batch] {
    if (!x->requires_grad) return;
    const auto& gy = y->grad_buffer();
    auto& gx = x->grad_buffer();
    if (!training) {
      for (std::size_t b = 0; b < batch; ++b) gx[b] += gy[b] * inv;
      return;
    }
    double count = 0.0;
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      count += static_cast<double>(gy[b].size());
      sum_g += gy[b].sum();
      sum_gx += gy[b].cwiseProduct(y->value[b]).sum();
    }
    const double mg = sum_g / count;
    const double mgx = sum_gx / count;
    for (std::size_t b = 0; b < batch; ++b)
      gx[b].array() += inv * (gy[b].array() - mg - y->value[b].array() * mgx);
  });
  return y;
}

Var sinc_filter(GradTape& tape, const Var& x, const SincBandPass& filter, Taper taper, SincBandPass& grad) {
  const std::size_t batch = x->batch();
  const Vector k = materialize_kernel<double>(filter, taper);
  std::vector<Matrix> out(batch);
  parallel_for(batch, [&](std::size_t b) {
    out[b].resize(1, x->value[b].size());
    conv_same<double>(cspan(x->value[b]), cspan(k), span_of(out[b]));
  });
  Var y = make_var(std::move(out));
  tape.record([x, y, k, filter, taper, &grad, batch] {
    const auto& gy = y->grad_buffer();
    std::vector<Vector> gk(batch, Vector::Zero(k.size()));
    const bool need_x = x->requires_grad;
    if (need_x) x->grad_buffer();
    parallel_for(batch, [&](std::size_t b) {
      conv_same_grad_kernel(cspan(gy[b]), cspan(x->value[b]), span_of(gk[b]));
      if (need_x) {
        Matrix gin(1, gy[b].size());
        conv_same_grad_input(cspan(gy[b]), cspan(k), span_of(gin));
        x->grad[b] += gin;
      }
    });
    Vector total = Vector::Zero(k.size());
    for (const auto& g : gk) total += g;
    const KernelJacobian jac = kernel_cutoff_jacobian(filter, taper);
    grad.f_low += jac.d_low.dot(total);
    grad.f_high += jac.d_high.dot(total);
  });
  return y;
}

Var add(GradTape& tape, const Var& a, const Var& b) {
  std::vector<Matrix> out(a->batch());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  Var y = make_var(std::move(out), a->requires_grad || b->requires_grad);
  tape.record([a, b, y] {
    const auto& gy = y->grad_buffer();
    for (const Var& in : {a, b}) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
  return y;
}

Var decimate(GradTape& tape, const Var& x, int factor) {
  std::vector<Matrix> out(x->batch());
  for (std::size_t b = 0; b < out.size(); ++b) {
    const Matrix& v = x->value[b];
    if (v.cols() % factor != 0) throw Error("decimate: length not divisible by factor");
    out[b].resize(v.rows(), v.cols() / factor);
    for (Eigen::Index i = 0; i < out[b].cols(); ++i) out[b].col(i) = v.col(i * factor);
  }
  Var y = make_var(std::move(out), x->requires_grad);
  tape.record([x, y, factor] {
    if (!x->requires_grad) return;
    const auto& gy = y->grad_buffer();
    auto& gx = x->grad_buffer();
    for (std::size_t b = 0; b < gx.size(); ++b)
      for (Eigen::Index i = 0; i < gy[b].cols(); ++i) gx[b].col(i * factor) += gy[b].col(i);
  });
  return y;
}

Var stack_rows(GradTape& tape, const std::vector<Var>& rows) {
  const std::size_t batch = rows.front()->batch();
  const auto n = static_cast<Eigen::Index>(rows.size());
  std::vector<Matrix> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out[b].resize(n, rows.front()->value[b].cols());
    for (Eigen::Index r = 0; r < n; ++r) out[b].row(r) = rows[r]->value[b];
  }
  Var y = make_var(std::move(out));
  tape.record([rows, y, batch, n] {
    const auto& gy = y->grad_buffer();
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!rows[r]->requires_grad) continue;
      auto& g = rows[r]->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) g[b] += gy[b].row(r);
    }
  });
  return y;
}

Var channel_pool(GradTape& tape, const Var& x, const BackboneLayer& layer, int lowpass_len, BackboneLayer& grad) {
  if (layer.stride == 1) return x;
  const std::size_t batch = x->batch();
  std::vector<Matrix> out(batch);
  parallel_for(batch, [&](std::size_t b) { out[b] = dydec::channel_pool(x->value[b], layer, lowpass_len); });
  Var y = make_var(std::move(out));
  const Eigen::Index channels = layer.lowpass_cutoff.size();
  std::vector<Vector> kernels(channels);
  std::vector<Vector> dkernels(channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    kernels[c] = lowpass_kernel(layer.lowpass_cutoff[c], layer.input_rate, lowpass_len);
    dkernels[c] = lowpass_kernel_dcutoff(layer.lowpass_cutoff[c], layer.input_rate, lowpass_len);
  }
  const int stride = layer.stride;
  tape.record([x, y, kernels = std::move(kernels), dkernels = std::move(dkernels), stride, &grad, batch,
               channels] {
    const auto& gy = y->grad_buffer();
    const bool need_x = x->requires_grad;
    if (need_x) x->grad_buffer();
    std::vector<Vector> gcut(batch, Vector::Zero(channels));
    parallel_for(batch, [&](std::size_t b) {
      const Matrix& xv = x->value[b];
      const Eigen::Index n = xv.cols();
      const Eigen::Index frames = gy[b].cols();
      for (Eigen::Index ch = 0; ch < channels; ++ch) {
        const Vector& k = kernels[ch];
        const Eigen::Index len = k.size();
        const Eigen::Index c = (len - 1) / 2;
        Vector gk = Vector::Zero(len);
        const double* xr = xv.row(ch).data();
        const double* gr = gy[b].row(ch).data();
        double* gxr = need_x ? x->grad[b].row(ch).data() : nullptr;
        for (Eigen::Index m = 0; m < frames; ++m) {
          const Eigen::Index center = m * stride;
          const Eigen::Index j0 = std::max<Eigen::Index>(0, c - center);
          const Eigen::Index j1 = std::min<Eigen::Index>(len, n - center + c);
          const double g = gr[m];
          for (Eigen::Index j = j0; j < j1; ++j) {
            gk[j] += g * xr[center + j - c];
            if (gxr != nullptr) gxr[center + j - c] += k[j] * g;
          }
        }
        gcut[b][ch] = gk.dot(dkernels[ch]);
      }
    });
    for (std::size_t b = 0; b < batch; ++b) grad.lowpass_cutoff += gcut[b];
  });
  return y;
}

Var cross_conv_relu(GradTape& tape, const Var& x, const BackboneLayer& layer, BackboneLayer& grad) {
  const std::size_t batch = x->batch();
  std::vector<Matrix> out(batch);
  parallel_for(batch, [&](std::size_t b) {
    out[b] = cross_channel_conv(x->value[b], layer.weights, layer.bias).cwiseMax(0.0);
  });
  Var y = make_var(std::move(out));
  tape.record([x, y, weights = layer.weights, &grad, batch] {
    const auto& gy = y->grad_buffer();
    std::vector<Matrix> gz(batch);
    for (std::size_t b = 0; b < batch; ++b)
      gz[b] = (y->value[b].array() > 0.0).select(gy[b], 0.0);
    const auto width = static_cast<Eigen::Index>(weights.size());
    const Eigen::Index c = (width - 1) / 2;
    const bool need_x = x->requires_grad;
    if (need_x) {
      x->grad_buffer();
      parallel_for(batch, [&](std::size_t b) {
        const Eigen::Index t = gz[b].cols();
        for (Eigen::Index k = 0; k < width; ++k) {
          const Eigen::Index shift = k - c;
          const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
          const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
          if (hi <= lo) continue;
          x->grad[b].middleCols(lo + shift, hi - lo).noalias() +=
              weights[k].transpose() * gz[b].middleCols(lo, hi - lo);
        }
      });
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const Eigen::Index t = gz[b].cols();
      grad.bias += gz[b].rowwise().sum().transpose();
      for (Eigen::Index k = 0; k < width; ++k) {
        const Eigen::Index shift = k - c;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
        if (hi <= lo) continue;
        grad.weights[k].noalias() +=
            gz[b].middleCols(lo, hi - lo) * x->value[b].middleCols(lo + shift, hi - lo).transpose();
      }
    }
  });
  return y;
}

Var frame_head(GradTape& tape, const Var& h, const Vector& weight, double bias, Vector& grad_weight,
               double& grad_bias) {
  const std::size_t batch = h->batch();
  std::vector<Matrix> z(batch);
  std::vector<Matrix> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    z[b] = weight.transpose() * h->value[b];
    z[b].array() += bias;
    out[b] = z[b].unaryExpr([](double v) { return softplus(v); });
  }
  Var y = make_var(std::move(out));
  tape.record([h, y, z = std::move(z), weight, &grad_weight, &grad_bias, batch] {
    const auto& gy = y->grad_buffer();
    const bool need_h = h->requires_grad;
    if (need_h) h->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b) {
      const Matrix gz = gy[b].cwiseProduct(z[b].unaryExpr([](double v) { return sigmoid(v); }));
      grad_weight.noalias() += h->value[b] * gz.transpose();
      grad_bias += gz.sum();
      if (need_h) h->grad[b].noalias() += weight * gz;
    }
  });
  return y;
}

}  // namespace dydec::ops

namespace dydec {

namespace {

Var node_graph(GradTape& tape, const Var& x, const TreeNode& node, TreeNode& gnode, const SincBandPass& filter,
               Taper taper, NormMode norm, bool training, std::vector<NodeStats>& stats, int depth, int index) {
  Var normed = x;
  switch (norm) {
    case NormMode::egnorm:
      normed = ops::egnorm(tape, x, node.egnorm, gnode.egnorm);
      break;
    case NormMode::batchnorm: {
      BatchNormStats s;
      normed = ops::batchnorm(tape, x, node.bn, training, &s);
      if (training) stats.push_back({depth, index, s});
      break;
    }
    case NormMode::none:
      break;
  }
  Var filtered = ops::sinc_filter(tape, normed, filter, taper, gnode.filter);
  return ops::add(tape, filtered, x);
}

}  // namespace

FrontendOutputs frontend_graph(GradTape& tape, const Model& model, Model& grads, const Var& input, bool training) {
  const DyadicTree& tree = model.tree;
  const auto& fc = model.config.frontend;
  FrontendOutputs res;
  for (const auto& m : input->value) {
    if (m.rows() != 1 || m.cols() == 0 || m.cols() % tree.total_decimation() != 0)
      throw Error("frontend: clip length must be a positive multiple of the total decimation");
  }
  std::vector<Var> leaves;
  if (fc.mode == DecomposeMode::single_scale) {
    const int d = tree.depth;
    for (int i = 0; i < tree.leaf_count(); ++i) {
      SincBandPass f = tree.node(d, i).filter;
      f.sample_rate = tree.base_sample_rate;
      Var y = node_graph(tape, input, tree.node(d, i), grads.tree.node(d, i), f, tree.taper, fc.norm, training,
                         res.bn_batch, d, i);
      leaves.push_back(ops::decimate(tape, y, tree.total_decimation()));
    }
  } else {
    std::vector<Var> inputs{input};
    for (int d = 1; d <= tree.depth; ++d) {
      const auto count = static_cast<int>(tree.levels[d - 1].size());
      std::vector<Var> outputs(count);
      for (int i = 0; i < count; ++i) {
        const TreeNode& node = tree.node(d, i);
        Var y = node_graph(tape, inputs[i / 2], node, grads.tree.node(d, i), node.filter, tree.taper, fc.norm,
                           training, res.bn_batch, d, i);
        outputs[i] = tree.decimates_after(d) ? ops::decimate(tape, y, 2) : y;
      }
      inputs = std::move(outputs);
    }
    leaves = std::move(inputs);
  }
  res.tf = ops::stack_rows(tape, leaves);
  return res;
}

Var backbone_graph(GradTape& tape, const Model& model, Model& grads, const Var& tf) {
  const BackboneParams& bp = model.backbone;
  Var h = tf;
  for (std::size_t l = 0; l < bp.layers.size(); ++l) {
    h = ops::channel_pool(tape, h, bp.layers[l], bp.lowpass_len, grads.backbone.layers[l]);
    h = ops::cross_conv_relu(tape, h, bp.layers[l], grads.backbone.layers[l]);
  }
  return ops::frame_head(tape, h, bp.out_weight, bp.out_bias, grads.backbone.out_weight, grads.backbone.out_bias);
}

}  // namespace dydec
