#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "dydec/filterbank.hpp"

using namespace dydec;

namespace {

// |sum_j k[j] e^{-i 2 pi f j / sr}|
double dft_magnitude(const Vector& k, double f, double sr) {
  double re = 0.0, im = 0.0;
  for (Eigen::Index j = 0; j < k.size(); ++j) {
    const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(j) / sr;
    re += k[j] * std::cos(ph);
    im -= k[j] * std::sin(ph);
  }
  return std::hypot(re, im);
}

}  // namespace

TEST_CASE("init_dyadic_tree: depth-2 node (2, 1) covers [3000, 6000]") {
  const DyadicTree t = init_dyadic_tree(2, 12000.0, 65, 24000.0, {});
  CHECK(t.node(2, 1).filter.f_low == 3000.0);
  CHECK(t.node(2, 1).filter.f_high == 6000.0);
}

TEST_CASE("init_dyadic_tree: depth 1 splits the band in two") {
  const DyadicTree t = init_dyadic_tree(1, 12000.0, 65, 24000.0, {1});
  CHECK(t.node(1, 0).filter.f_low == 0.0);
  CHECK(t.node(1, 0).filter.f_high == 6000.0);
  CHECK(t.node(1, 1).filter.f_low == 6000.0);
  CHECK(t.node(1, 1).filter.f_high == 12000.0);
}

TEST_CASE("init_dyadic_tree: node counts") {
  const DyadicTree t = init_dyadic_tree(3, 4000.0, 65, 8000.0, {1, 2});
  CHECK(t.node_count() == 14);
  CHECK(t.leaf_count() == 8);
  for (int d = 1; d <= 3; ++d) CHECK(t.levels[d - 1].size() == (std::size_t{1} << d));
}

TEST_CASE("init_dyadic_tree: children tile their parent exactly for D = 1..8") {
  for (int depth = 1; depth <= 8; ++depth) {
    std::vector<int> ds;
    for (int d = 1; d <= std::min(depth, 5); ++d) ds.push_back(d);
    const DyadicTree t = init_dyadic_tree(depth, 12000.0, 1025, 24000.0, ds);
    CHECK(t.leaf_count() == (1 << depth));
    for (int d = 1; d < depth; ++d) {
      for (int i = 0; i < (1 << d); ++i) {
        const auto& p = t.node(d, i).filter;
        const auto& a = t.node(d + 1, 2 * i).filter;
        const auto& b = t.node(d + 1, 2 * i + 1).filter;
        CHECK(a.f_low == p.f_low);
        CHECK(a.f_high == b.f_low);
        CHECK(b.f_high == p.f_high);
      }
    }
  }
}

TEST_CASE("init_dyadic_tree: local sample rates and defaults") {
  const DyadicTree t = init_dyadic_tree(4, 12000.0, 33, 24000.0, {1, 3});
  CHECK(t.node(1, 0).filter.sample_rate == 24000.0);
  CHECK(t.node(2, 0).filter.sample_rate == 12000.0);
  CHECK(t.node(3, 0).filter.sample_rate == 12000.0);
  CHECK(t.node(4, 0).filter.sample_rate == 6000.0);
  CHECK(t.total_decimation() == 4);
  const EgNormParams& e = t.node(3, 5).egnorm;
  CHECK(e.sigma == 0.5);
  CHECK(e.alpha == 0.96);
  CHECK(e.delta == 2.0);
  CHECK(e.gamma == 0.5);
}

TEST_CASE("init_dyadic_tree: invalid arguments") {
  CHECK_THROWS_AS(init_dyadic_tree(0, 12000.0, 65, 24000.0), Error);
  CHECK_THROWS_AS(init_dyadic_tree(2, 12000.0, 64, 24000.0), Error);
  CHECK_THROWS_AS(init_dyadic_tree(2, 12001.0, 65, 24000.0), Error);
  CHECK_THROWS_AS(init_dyadic_tree(2, 12000.0, 65, 24000.0, {3}), Error);
}

TEST_CASE("materialize_kernel: centre tap, symmetry and the low-pass special case") {
  SincBandPass f{1500.0, 3000.0, 1025, 24000.0, 12000.0};
  const Vector k = materialize_kernel(f);
  const int c = 512;
  CHECK(k[c] == doctest::Approx(2.0 * (3000.0 - 1500.0) / 24000.0).epsilon(1e-15));
  for (int t = 1; t <= c; ++t) CHECK(k[c + t] == k[c - t]);

  f.f_low = 0.0;
  const Vector lp = materialize_kernel(f, Taper::none);
  for (int t = -c; t <= c; t += 37) {
    const double fh = 3000.0 / 24000.0;
    const double ref = t == 0 ? 2.0 * fh : std::sin(2.0 * std::numbers::pi * fh * t) / (std::numbers::pi * t);
    CHECK(lp[c + t] == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("materialize_kernel: pass band and stop band of a 1500-3000 Hz filter") {
  const SincBandPass f{1500.0, 3000.0, 1025, 24000.0, 12000.0};
  const Vector k = materialize_kernel(f);
  double pass_sum = 0.0;
  int pass_n = 0;
  std::vector<double> pass;
  for (double hz = 1500.0; hz <= 3000.0; hz += 10.0) {
    pass.push_back(dft_magnitude(k, hz, 24000.0));
    pass_sum += pass.back();
    ++pass_n;
  }
  const double mean = pass_sum / pass_n;
  for (double m : pass) CHECK(m >= 0.5 * mean);
  CHECK(dft_magnitude(k, 0.0, 24000.0) <= 0.05 * mean);
  for (double hz = 6000.0; hz <= 12000.0; hz += 50.0) CHECK(dft_magnitude(k, hz, 24000.0) <= 0.05 * mean);
}

TEST_CASE("clamp_cutoffs") {
  SincBandPass f{-50.0, 3000.0, 65, 24000.0, 12000.0};
  f = clamp_cutoffs(f);
  CHECK(f.f_low == 0.0);
  CHECK(f.f_high == 3000.0);

  f = clamp_cutoffs({3000.0, 2900.0, 65, 24000.0, 12000.0});
  CHECK(f.f_low == 3000.0);
  CHECK(f.f_high == 3001.0);

  f = clamp_cutoffs({1000.0, 2000.0, 65, 24000.0, 12000.0});
  CHECK(f.f_low == 1000.0);
  CHECK(f.f_high == 2000.0);

  f = clamp_cutoffs({20000.0, 30000.0, 65, 6000.0, 12000.0});
  CHECK(f.f_low == 11999.0);
  CHECK(f.f_high == 12000.0);
}

TEST_CASE("kernel_cutoff_jacobian matches central differences") {
  const SincBandPass f{700.0, 2300.0, 129, 8000.0, 4000.0};
  const KernelJacobian j = kernel_cutoff_jacobian(f);
  const double h = 1e-4;
  auto fd = [&](bool high) {
    SincBandPass a = f, b = f;
    (high ? a.f_high : a.f_low) += h;
    (high ? b.f_high : b.f_low) -= h;
    return Vector((materialize_kernel(a) - materialize_kernel(b)) / (2.0 * h));
  };
  const Vector n_low = fd(false), n_high = fd(true);
  CHECK((j.d_low - n_low).norm() / n_low.norm() < 1e-5);
  CHECK((j.d_high - n_high).norm() / n_high.norm() < 1e-5);
}

TEST_CASE("taper_window: odd length, unit centre, symmetric") {
  const Vector w = taper_window(11, Taper::hamming);
  CHECK(w[5] == 1.0);
  CHECK(w[0] == doctest::Approx(0.08));
  for (int i = 0; i < 11; ++i) CHECK(w[i] == w[10 - i]);
  CHECK(taper_window(11, Taper::none).isOnes());
}

TEST_CASE("receptive field grows across decimation stages") {
  const DyadicTree t = init_dyadic_tree(8, 12000.0, 1025, 24000.0, {1, 2, 3, 4, 5});
  for (int d = 2; d <= 8; ++d) {
    if (t.decimations_before(d) > t.decimations_before(d - 1)) CHECK(receptive_field(t, d) > receptive_field(t, d - 1));
  }
  CHECK(receptive_field(t, 1) == 1025);
}

TEST_CASE("tree record round trip") {
  DyadicTree t = init_dyadic_tree(3, 4000.0, 33, 8000.0, {1, 2});
  t.taper = Taper::none;
  t.node(2, 3).filter.f_low = 1234.5678;
  t.node(3, 1).egnorm.alpha = 0.123456789;
  t.node(1, 0).bn = {0.25, 3.5};
  std::stringstream ss;
  write_tree(ss, t);
  const DyadicTree r = read_tree(ss);
  CHECK(r.depth == 3);
  CHECK(r.taper == Taper::none);
  CHECK(r.downsample_depths == t.downsample_depths);
  CHECK(r.node(2, 3).filter.f_low == 1234.5678);
  CHECK(r.node(3, 1).egnorm.alpha == 0.123456789);
  CHECK(r.node(1, 0).bn.var == 3.5);
  std::stringstream bad("garbage");
  CHECK_THROWS_AS(read_tree(bad), Error);
}
