#include "dydec/backbone.hpp"

#include <cmath>
#include <random>
#include <span>

namespace dydec {

int BackboneConfig::stride_product() const {
  int p = 1;
  for (const auto& s : stages) p *= s.stride;
  return p;
}

BackboneParams init_backbone(const BackboneConfig& config, int in_channels, double frame_rate,
                             std::uint64_t seed) {
  if (config.lowpass_len < 1 || config.lowpass_len % 2 == 0)
    throw Error("init_backbone: lowpass_len must be odd");
  if (config.conv_width < 1 || config.conv_width % 2 == 0)
    throw Error("init_backbone: conv_width must be odd");
  if (config.stages.empty()) throw Error("init_backbone: at least one stage required");

  std::mt19937_64 rng(seed);
  BackboneParams p;
  p.lowpass_len = config.lowpass_len;
  int channels = in_channels;
  double rate = frame_rate;
  for (const auto& stage : config.stages) {
    if (stage.stride < 1 || stage.out_channels < 1) throw Error("init_backbone: bad stage");
    BackboneLayer layer;
    layer.stride = stage.stride;
    layer.input_rate = rate;
    if (stage.stride > 1) layer.lowpass_cutoff = Vector::Constant(channels, 0.25 * rate / 2.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels * config.conv_width));
    std::uniform_real_distribution<double> u(-bound, bound);
    layer.weights.resize(config.conv_width);
    for (auto& w : layer.weights) {
      w.resize(stage.out_channels, channels);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    }
    layer.bias.resize(stage.out_channels);
    for (auto& b : layer.bias) b = u(rng);
    p.layers.push_back(std::move(layer));
    channels = stage.out_channels;
    rate /= stage.stride;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::uniform_real_distribution<double> u(-bound, bound);
  p.out_weight.resize(channels);
  for (auto& w : p.out_weight) w = u(rng);
  p.out_bias = u(rng);
  if (config.out_bias_init) p.out_bias = *config.out_bias_init;
  return p;
}

void clamp_backbone(BackboneParams& params) {
  for (auto& layer : params.layers) {
    const double nyq = layer.input_rate / 2.0;
    for (auto& f : layer.lowpass_cutoff) f = std::clamp(f, 1e-3 * nyq, nyq);
  }
}

}  // namespace dydec
