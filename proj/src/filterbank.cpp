#include "dydec/filterbank.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "dydec/binary_io.hpp"

namespace dydec {

namespace {
constexpr std::uint32_t kTreeTag = 0x45455254;  // "TREE"
constexpr std::uint32_t kTreeVersion = 1;
}  // namespace

bool DyadicTree::decimates_after(int d) const {
  return std::find(downsample_depths.begin(), downsample_depths.end(), d) != downsample_depths.end();
}

int DyadicTree::decimations_before(int d) const {
  return static_cast<int>(
      std::count_if(downsample_depths.begin(), downsample_depths.end(), [d](int k) { return k < d; }));
}

int DyadicTree::total_decimation() const { return 1 << static_cast<int>(downsample_depths.size()); }

std::size_t DyadicTree::node_count() const {
  std::size_t n = 0;
  for (const auto& level : levels) n += level.size();
  return n;
}

DyadicTree init_dyadic_tree(int depth, double band_top, int kernel_len, double base_sample_rate,
                            std::vector<int> downsample_depths) {
  if (depth < 1) throw Error("init_dyadic_tree: depth must be positive");
  if (depth > 20) throw Error("init_dyadic_tree: depth too large");
  if (kernel_len < 1 || kernel_len % 2 == 0) throw Error("init_dyadic_tree: kernel_len must be odd");
  if (!(base_sample_rate > 0.0)) throw Error("init_dyadic_tree: sample rate must be positive");
  if (!(band_top > 0.0) || band_top > base_sample_rate / 2.0)
    throw Error("init_dyadic_tree: band_top must lie in (0, sample_rate/2]");

  std::sort(downsample_depths.begin(), downsample_depths.end());
  downsample_depths.erase(std::unique(downsample_depths.begin(), downsample_depths.end()),
                          downsample_depths.end());
  for (int d : downsample_depths)
    if (d < 1 || d > depth) throw Error("init_dyadic_tree: downsample depth out of range");

  DyadicTree tree;
  tree.depth = depth;
  tree.base_sample_rate = base_sample_rate;
  tree.band_top = band_top;
  tree.downsample_depths = std::move(downsample_depths);
  tree.levels.resize(depth);
  for (int d = 1; d <= depth; ++d) {
    const int count = 1 << d;
    const double rate = base_sample_rate / static_cast<double>(1 << tree.decimations_before(d));
    auto& level = tree.levels[d - 1];
    level.resize(count);
    for (int i = 0; i < count; ++i) {
      auto& f = level[i].filter;
      f.f_low = band_top * i / count;
      f.f_high = band_top * (i + 1) / count;
      f.kernel_len = kernel_len;
      f.sample_rate = rate;
      f.max_freq = base_sample_rate / 2.0;
    }
  }
  return tree;
}

SincBandPass clamp_cutoffs(SincBandPass f) {
  f.f_low = std::min(std::max(f.f_low, 0.0), f.max_freq - kBandEpsilonHz);
  f.f_high = std::min(std::max(f.f_high, f.f_low + kBandEpsilonHz), f.max_freq);
  return f;
}

Vector taper_window(int len, Taper taper) {
  Vector w = Vector::Ones(len);
  if (taper == Taper::hamming && len > 1) {
    const int c = (len - 1) / 2;
    for (int n = 0; n < c; ++n) {
      w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (len - 1));
      w[len - 1 - n] = w[n];
    }
    w[c] = 1.0;
  }
  return w;
}

KernelJacobian kernel_cutoff_jacobian(const SincBandPass& filter, Taper taper) {
  const int len = filter.kernel_len;
  const Vector w = taper_window(len, taper);
  const double fh = filter.f_high / filter.sample_rate;
  const double fl = filter.f_low / filter.sample_rate;
  const int c = (len - 1) / 2;
  KernelJacobian jac{Vector(len), Vector(len)};
  for (int j = 0; j < len; ++j) {
    const double t = j - c;
    jac.d_high[j] = w[j] * detail::lowpass_tap_dfreq(fh, t) / filter.sample_rate;
    jac.d_low[j] = -w[j] * detail::lowpass_tap_dfreq(fl, t) / filter.sample_rate;
  }
  return jac;
}

Vector lowpass_kernel_dcutoff(double cutoff_hz, double sample_rate, int len, Taper taper) {
  const Vector w = taper_window(len, taper);
  const double f = cutoff_hz / sample_rate;
  const int c = (len - 1) / 2;
  Vector k(len);
  for (int j = 0; j < len; ++j) k[j] = w[j] * detail::lowpass_tap_dfreq(f, j - c) / sample_rate;
  return k;
}

std::int64_t receptive_field(const DyadicTree& tree, int d) {
  if (d < 1 || d > tree.depth) throw Error("receptive_field: depth out of range");
  std::int64_t span = 1;
  for (int k = 1; k <= d; ++k) {
    const std::int64_t len = tree.levels[k - 1].front().filter.kernel_len;
    span += (len - 1) * (std::int64_t{1} << tree.decimations_before(k));
  }
  return span;
}

void write_tree(std::ostream& os, const DyadicTree& tree) {
  using namespace binio;
  put_u32(os, kTreeTag);
  put_u32(os, kTreeVersion);
  put_i32(os, tree.depth);
  put_f64(os, tree.base_sample_rate);
  put_f64(os, tree.band_top);
  put_i32(os, tree.levels.empty() ? 0 : tree.levels.front().front().filter.kernel_len);
  put_u32(os, static_cast<std::uint32_t>(tree.taper));
  put_u32(os, static_cast<std::uint32_t>(tree.downsample_depths.size()));
  for (int d : tree.downsample_depths) put_i32(os, d);
  for (const auto& level : tree.levels) {
    for (const auto& node : level) {
      put_f64(os, node.filter.f_low);
      put_f64(os, node.filter.f_high);
      put_f64(os, node.egnorm.sigma);
      put_f64(os, node.egnorm.alpha);
      put_f64(os, node.egnorm.delta);
      put_f64(os, node.egnorm.gamma);
      put_f64(os, node.bn.mean);
      put_f64(os, node.bn.var);
    }
  }
}

DyadicTree read_tree(std::istream& is) {
  using namespace binio;
  expect_tag(is, kTreeTag, "tree");
  if (get_u32(is) != kTreeVersion) throw Error("read_tree: unsupported version");
  const int depth = get_i32(is);
  const double rate = get_f64(is);
  const double band_top = get_f64(is);
  const int kernel_len = get_i32(is);
  const auto taper = static_cast<Taper>(get_u32(is));
  const std::uint32_t nds = get_u32(is);
  if (nds > 64) throw Error("read_tree: corrupt downsample list");
  std::vector<int> ds(nds);
  for (auto& d : ds) d = get_i32(is);
  DyadicTree tree = init_dyadic_tree(depth, band_top, kernel_len, rate, ds);
  tree.taper = taper;
  for (auto& level : tree.levels) {
    for (auto& node : level) {
      node.filter.f_low = get_f64(is);
      node.filter.f_high = get_f64(is);
      node.egnorm.sigma = get_f64(is);
      node.egnorm.alpha = get_f64(is);
      node.egnorm.delta = get_f64(is);
      node.egnorm.gamma = get_f64(is);
      node.bn.mean = get_f64(is);
      node.bn.var = get_f64(is);
    }
  }
  return tree;
}

}  // namespace dydec
