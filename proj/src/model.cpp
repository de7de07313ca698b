#include "dydec/model.hpp"

#include <algorithm>

namespace dydec {

ModelConfig default_model_config() { return ModelConfig{}; }

ModelConfig miniature_model_config(int depth, int kernel_len, double sample_rate) {
  ModelConfig c;
  c.frontend.depth = depth;
  c.frontend.kernel_len = kernel_len;
  c.frontend.sample_rate = sample_rate;
  c.frontend.downsample_depths.clear();
  for (int d = 1; d <= std::min(depth, 5); ++d) c.frontend.downsample_depths.push_back(d);
  c.backbone.stages = {{2, 16}, {2, 16}, {1, 16}};
  c.backbone.lowpass_len = 15;
  return c;
}

Eigen::Index Model::output_frames(Eigen::Index samples) const {
  return samples / tree.total_decimation() / config.backbone.stride_product();
}

Model init_model(const ModelConfig& config, std::uint64_t seed, Eigen::Index clip_samples) {
  const auto& fc = config.frontend;
  Model m;
  m.config = config;
  const double band_top = fc.band_top > 0.0 ? fc.band_top : fc.sample_rate / 2.0;
  m.tree = init_dyadic_tree(fc.depth, band_top, fc.kernel_len, fc.sample_rate, fc.downsample_depths);
  m.tree.taper = fc.taper;
  const int total = m.tree.total_decimation();
  const int strides = config.backbone.stride_product();
  if (clip_samples <= 0 || clip_samples % (static_cast<Eigen::Index>(total) * strides) != 0)
    throw Error("init_model: clip length must be a multiple of decimation x stride product (" +
                std::to_string(total * strides) + ")");
  m.backbone = init_backbone(config.backbone, m.tree.leaf_count(), fc.sample_rate / total, seed);
  // Starts the regression head at the density-sum count so both heads begin from the same estimate.
  m.head.weight = static_cast<double>(m.output_frames(clip_samples));
  m.head.bias = 0.0;
  return m;
}

Model zeros_like(const Model& model) {
  Model z = model;
  visit_parameters(z, [](double& v, ParamKind) { v = 0.0; });
  return z;
}

const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::f_low: return "f_low";
    case ParamKind::f_high: return "f_high";
    case ParamKind::eg_sigma: return "eg_sigma";
    case ParamKind::eg_alpha: return "eg_alpha";
    case ParamKind::eg_delta: return "eg_delta";
    case ParamKind::eg_gamma: return "eg_gamma";
    case ParamKind::pool_cutoff: return "pool_cutoff";
    case ParamKind::conv_weight: return "conv_weight";
    case ParamKind::conv_bias: return "conv_bias";
    case ParamKind::out_weight: return "out_weight";
    case ParamKind::out_bias: return "out_bias";
    case ParamKind::head_weight: return "head_weight";
    case ParamKind::head_bias: return "head_bias";
  }
  return "?";
}

bool is_frontend(ParamKind kind) {
  return kind == ParamKind::f_low || kind == ParamKind::f_high || kind == ParamKind::eg_sigma ||
         kind == ParamKind::eg_alpha || kind == ParamKind::eg_delta || kind == ParamKind::eg_gamma;
}

std::size_t parameter_count(const Model& m) {
  std::size_t n = 0;
  visit_parameters(m, [&n](const double&, ParamKind) { ++n; });
  return n;
}

Vector pack_parameters(const Model& m) {
  Vector flat(static_cast<Eigen::Index>(parameter_count(m)));
  Eigen::Index i = 0;
  visit_parameters(m, [&](const double& v, ParamKind) { flat[i++] = v; });
  return flat;
}

void unpack_parameters(Model& m, const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count(m)))
    throw Error("unpack_parameters: size mismatch");
  Eigen::Index i = 0;
  visit_parameters(m, [&](double& v, ParamKind) { v = flat[i++]; });
}

std::vector<ParamKind> parameter_kinds(const Model& m) {
  std::vector<ParamKind> kinds;
  visit_parameters(m, [&](const double&, ParamKind k) { kinds.push_back(k); });
  return kinds;
}

void clamp_model(Model& m) {
  for (auto& level : m.tree.levels) {
    for (auto& node : level) {
      node.filter = clamp_cutoffs(node.filter);
      node.egnorm = clamp_egnorm(node.egnorm);
    }
  }
  clamp_backbone(m.backbone);
}

Prediction predict(const Model& model, const AudioClip& clip) {
  const TFMap tf = decompose<double>(clip, model.tree, model.config.frontend.mode, model.config.frontend.norm);
  Prediction p;
  p.frame_scores = backbone_forward(tf, model.backbone);
  p.count = model.config.head == HeadMode::density ? p.frame_scores.sum()
                                                    : regress_count_head(p.frame_scores, model.head);
  return p;
}

}  // namespace dydec
