#include <doctest.h>

#include "dydec/frontend.hpp"
#include "helpers.hpp"

using namespace dydec;

namespace {

AudioClip noise_clip(Eigen::Index n, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return AudioClip{testutil::random_vector(n, rng), rate};
}

}  // namespace

TEST_CASE("decompose: bins and frames follow the tree") {
  const DyadicTree t = init_dyadic_tree(4, 4000.0, 33, 8000.0, {1, 2, 3});
  const TFMap tf = decompose(noise_clip(1600, 8000.0, 1), t);
  CHECK(tf.bins() == 16);
  CHECK(tf.frames() == 200);
  CHECK(tf.frame_rate == 1000.0);
  const TFMap ss = decompose(noise_clip(1600, 8000.0, 1), t, DecomposeMode::single_scale);
  CHECK(ss.bins() == tf.bins());
  CHECK(ss.frames() == tf.frames());
}

TEST_CASE("decompose: zero input gives a zero map in every mode") {
  const DyadicTree t = init_dyadic_tree(3, 4000.0, 33, 8000.0, {1, 2});
  const AudioClip z{Vector::Zero(512), 8000.0};
  for (auto mode : {DecomposeMode::dyadic, DecomposeMode::single_scale})
    for (auto norm : {NormMode::egnorm, NormMode::none})
      CHECK(decompose(z, t, mode, norm).values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decompose: depth 1 without decimation equals direct filtering plus skip") {
  DyadicTree t = init_dyadic_tree(1, 4000.0, 65, 8000.0, {});
  for (auto& node : t.levels[0]) node.egnorm = {0.5, 0.0, 2.0, 1.0};
  const AudioClip clip = noise_clip(700, 8000.0, 2);
  const TFMap tf = decompose(clip, t);
  for (int b = 0; b < 2; ++b) {
    const Vector ref = testutil::naive_conv_same(clip.samples, materialize_kernel(t.node(1, b).filter)) + clip.samples;
    CHECK((tf.values.row(b).transpose() - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("decompose: leaf rows follow ascending f_low") {
  const DyadicTree t = init_dyadic_tree(3, 4000.0, 129, 8000.0, {});
  for (int b = 1; b < t.leaf_count(); ++b) CHECK(t.node(3, b).filter.f_low > t.node(3, b - 1).filter.f_low);
  // A pure tone in the band of leaf 5 carries most of its energy there.
  AudioClip tone{Vector(2048), 8000.0};
  const double hz = 0.5 * (t.node(3, 5).filter.f_low + t.node(3, 5).filter.f_high);
  for (Eigen::Index i = 0; i < tone.size(); ++i) tone.samples[i] = std::sin(2.0 * 3.14159265358979 * hz * i / 8000.0);
  const TFMap tf = decompose(tone, t, DecomposeMode::dyadic, NormMode::none);
  // Rows also contain the skip path; compare against the skip-free energy.
  Vector energy(8);
  for (int b = 0; b < 8; ++b) energy[b] = (tf.values.row(b) - tone.samples.transpose()).squaredNorm();
  Eigen::Index best = 0;
  energy.maxCoeff(&best);
  CHECK(best == 5);
}

TEST_CASE("decompose: rejects mismatched rate and length") {
  const DyadicTree t = init_dyadic_tree(2, 4000.0, 33, 8000.0, {1, 2});
  CHECK_THROWS_AS(decompose(noise_clip(400, 16000.0, 3), t), Error);
  CHECK_THROWS_AS(decompose(noise_clip(402, 8000.0, 3), t), Error);
}

TEST_CASE("decompose: float and double paths agree") {
  const DyadicTree t = init_dyadic_tree(3, 4000.0, 33, 8000.0, {1, 2});
  const AudioClip clip = noise_clip(1024, 8000.0, 4);
  const TFMap d = decompose<double>(clip, t);
  const TFMapT<float> f = decompose<float>(clip, t);
  CHECK((f.values.cast<double>() - d.values).cwiseAbs().maxCoeff() < 1e-4);
}
