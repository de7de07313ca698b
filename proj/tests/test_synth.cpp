#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dydec/metrics.hpp"
#include "dydec/synth.hpp"
#include "dydec/wav.hpp"
#include "helpers.hpp"

using namespace dydec;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SceneSpec quiet_scene(double rate) {
  SceneSpec s;
  s.duration_s = 2.0;
  s.sample_rate = rate;
  s.snr.noiseless = true;
  return s;
}

}  // namespace

TEST_CASE("seed sounds are peak-normalized and at most 1.5 s long") {
  for (int f = 0; f < kSeedFamilies; ++f) {
    const SeedSound s = make_seed_sound(f, 16000.0);
    CHECK(s.waveform.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(static_cast<double>(s.waveform.size()) / 16000.0 <= kMaxSeedDuration);
  }
}

TEST_CASE("render_scene: source at the microphone reproduces the seed") {
  const std::vector<SeedSound> seeds{make_seed_sound(0, 8000.0)};
  SceneSpec s = quiet_scene(8000.0);
  s.events.push_back({0, s.mic, 0.25, 1.0});
  const RenderedScene r = render_scene(s, seeds);
  const Eigen::Index start = 2000, len = seeds[0].waveform.size();
  CHECK((r.mix.samples.segment(start, len) - seeds[0].waveform).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(r.mix.samples.head(start).isZero());
  REQUIRE(r.labels.size() == 1);
  CHECK(r.labels[0].t_start == doctest::Approx(0.25));
  CHECK(r.labels[0].t_end == doctest::Approx(0.25 + static_cast<double>(len) / 8000.0));
}

TEST_CASE("render_scene: amplitude falls as 1/r") {
  const std::vector<SeedSound> seeds{make_seed_sound(1, 8000.0)};
  SceneSpec near = quiet_scene(8000.0), far = quiet_scene(8000.0);
  near.events.push_back({seeds[0].seed_id, near.mic + Eigen::Vector3d(10, 0, 0), 0.1, 1.0});
  far.events.push_back({seeds[0].seed_id, far.mic + Eigen::Vector3d(20, 0, 0), 0.1, 1.0});
  const double a = render_scene(near, seeds).clean.norm();
  const double b = render_scene(far, seeds).clean.norm();
  CHECK(std::abs(b / a - 0.5) < 1e-6);
}

TEST_CASE("render_scene: propagation delay and label shift") {
  const std::vector<SeedSound> seeds{make_seed_sound(0, 8000.0)};
  SceneSpec s = quiet_scene(8000.0);
  s.events.push_back({0, s.mic + Eigen::Vector3d(0, 34.3, 0), 0.0, 1.0});
  const RenderedScene r = render_scene(s, seeds);
  CHECK(propagation_delay_samples(34.3, 8000.0) == 800);
  CHECK(r.labels[0].t_start == doctest::Approx(0.1));
}

TEST_CASE("render_scene: measured SNR equals the drawn SNR") {
  const std::vector<SeedSound> seeds{make_seed_sound(2, 8000.0)};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneSpec s = quiet_scene(8000.0);
    s.snr.noiseless = false;
    s.seed = seed;
    s.events.push_back({seeds[0].seed_id, s.mic + Eigen::Vector3d(3, 4, 0), 0.2, 1.0});
    const RenderedScene r = render_scene(s, seeds);
    const double measured = 10.0 * std::log10(r.clean.squaredNorm() / r.noise.squaredNorm());
    CHECK(std::abs(measured - r.snr_db) < 0.5);
    CHECK(r.mix.samples.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("render_scene: rejects events that leave the clip") {
  const std::vector<SeedSound> seeds{make_seed_sound(0, 8000.0)};
  SceneSpec s = quiet_scene(8000.0);
  s.events.push_back({0, s.mic, 1.9, 1.0});
  CHECK_THROWS_AS(render_scene(s, seeds), Error);
}

TEST_CASE("synthesize_dataset meets every quota exactly") {
  DatasetConfig c;
  c.quotas = {{1, 4}, {3, 4}};
  c.sample_rate = 8000.0;
  c.duration_s = 2.0;
  c.seed = 5;
  const auto clips = synthesize_dataset(c);
  REQUIRE(clips.size() == 8);
  std::map<int, int> seen;
  for (const auto& clip : clips) {
    ++seen[clip.stratum];
    CHECK(max_polyp(polyphony_vector(clip.scene.labels, c.duration_s)) == clip.stratum);
    CHECK(static_cast<int>(clip.scene.labels.size()) <= c.event_budget);
    for (const auto& l : clip.scene.labels) {
      CHECK(l.t_start >= 0.0);
      CHECK(l.t_end <= c.duration_s);
    }
  }
  CHECK(seen[1] == 4);
  CHECK(seen[3] == 4);
}

TEST_CASE("dataset config validation") {
  DatasetConfig c;
  c.quotas = {{9, 1}};
  c.event_budget = 8;
  CHECK_THROWS_AS(validate_dataset_config(c), Error);
  c = {};
  c.classes.clear();
  CHECK_THROWS_AS(validate_dataset_config(c), Error);
}

TEST_CASE("generate_dataset is byte-identical for a fixed seed") {
  DatasetConfig c;
  c.quotas = {{1, 2}, {2, 2}};
  c.classes = {0};
  c.sample_rate = 8000.0;
  c.duration_s = 1.5;
  c.seed = 17;
  const auto a = testutil::temp_dir("synth_a"), b = testutil::temp_dir("synth_b");
  generate_dataset(c, a);
  generate_dataset(c, b);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = std::filesystem::relative(e.path(), a);
    CHECK(slurp(e.path()) == slurp(b / rel));
  }
  CHECK(files == 6);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["seed"] == 17);
  CHECK(manifest["clips"].size() == 4);
  const AudioClip clip = read_wav((a / "clips" / "clip_00000.wav").string());
  CHECK(clip.sample_rate == 8000.0);
  CHECK(clip.size() == 12000);
}
