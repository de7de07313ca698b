#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dydec/backbone.hpp"
#include "dydec/counting.hpp"
#include "dydec/filterbank.hpp"
#include "dydec/frontend.hpp"

namespace dydec {

struct FrontendConfig {
  int depth = 8;
  double sample_rate = 24000.0;
  double band_top = 0.0;  ///< 0 selects sample_rate / 2
  int kernel_len = 1025;
  std::vector<int> downsample_depths{1, 2, 3, 4, 5};
  Taper taper = Taper::hamming;
  DecomposeMode mode = DecomposeMode::dyadic;
  NormMode norm = NormMode::egnorm;
};

enum class HeadMode : std::uint8_t { density = 0, reg_count = 1 };

struct ModelConfig {
  FrontendConfig frontend;
  BackboneConfig backbone;
  HeadMode head = HeadMode::density;
};

/// Full-size network: depth 8, 1025 taps, 24 kHz, 256 -> 512 -> 1024 -> 512 -> 256.
ModelConfig default_model_config();
/// Small network used for gradient checks and desk-scale training.
ModelConfig miniature_model_config(int depth = 3, int kernel_len = 65, double sample_rate = 8000.0);

struct Model {
  ModelConfig config;
  DyadicTree tree;
  BackboneParams backbone;
  CountHead head;

  /// Frame scores per clip of `samples` base-rate samples.
  [[nodiscard]] Eigen::Index output_frames(Eigen::Index samples) const;
};

Model init_model(const ModelConfig& config, std::uint64_t seed, Eigen::Index clip_samples);
/// Same structure, every trainable value set to zero.
Model zeros_like(const Model& model);

enum class ParamKind : std::uint8_t {
  f_low, f_high, eg_sigma, eg_alpha, eg_delta, eg_gamma,
  pool_cutoff, conv_weight, conv_bias, out_weight, out_bias, head_weight, head_bias
};
const char* to_string(ParamKind kind);
bool is_frontend(ParamKind kind);

/// Visits every trainable scalar in a fixed order: tree (level order: f_low, f_high, sigma,
/// alpha, delta, gamma), backbone layers, output affine, count head.
template <typename ModelT, typename F>
void visit_parameters(ModelT& m, F&& fn) {
  for (auto& level : m.tree.levels) {
    for (auto& node : level) {
      fn(node.filter.f_low, ParamKind::f_low);
      fn(node.filter.f_high, ParamKind::f_high);
      fn(node.egnorm.sigma, ParamKind::eg_sigma);
      fn(node.egnorm.alpha, ParamKind::eg_alpha);
      fn(node.egnorm.delta, ParamKind::eg_delta);
      fn(node.egnorm.gamma, ParamKind::eg_gamma);
    }
  }
  for (auto& layer : m.backbone.layers) {
    for (auto& c : layer.lowpass_cutoff) fn(c, ParamKind::pool_cutoff);
    for (auto& w : layer.weights)
      for (Eigen::Index i = 0; i < w.size(); ++i) fn(w.data()[i], ParamKind::conv_weight);
    for (auto& b : layer.bias) fn(b, ParamKind::conv_bias);
  }
  for (auto& w : m.backbone.out_weight) fn(w, ParamKind::out_weight);
  fn(m.backbone.out_bias, ParamKind::out_bias);
  fn(m.head.weight, ParamKind::head_weight);
  fn(m.head.bias, ParamKind::head_bias);
}

std::size_t parameter_count(const Model& m);
Vector pack_parameters(const Model& m);
void unpack_parameters(Model& m, const Vector& flat);
std::vector<ParamKind> parameter_kinds(const Model& m);

/// Restores every feasibility invariant (cutoff ordering, positivity floors).
void clamp_model(Model& m);

struct Prediction {
  Vector frame_scores;
  double count = 0.0;
};

/// Inference forward pass (double precision).
Prediction predict(const Model& model, const AudioClip& clip);

}  // namespace dydec
