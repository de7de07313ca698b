#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dydec/counting.hpp"
#include "dydec/types.hpp"

namespace dydec {

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr double kMinDistance = 1.0;
inline constexpr double kMaxSeedDuration = 1.5;

/// Harmonic chirp with amplitude modulation; the procedural stand-in for recorded seed clips.
struct ChirpParams {
  double f0 = 1000.0;
  double f1 = 2000.0;
  double duration = 0.5;
  double am_rate = 0.0;
  double am_depth = 0.0;
  int harmonics = 1;
};

struct SeedSound {
  int seed_id = 0;
  ChirpParams params;
  Vector waveform;  ///< peak-normalized to 1
};

inline constexpr int kSeedFamilies = 4;
ChirpParams seed_family(int family);
SeedSound make_seed_sound(int family, double sample_rate);
/// Wraps an externally supplied waveform (truncated to 1.5 s, peak-normalized).
SeedSound seed_from_waveform(int seed_id, const AudioClip& clip, double sample_rate);

/// Two-mode Gaussian mixture over SNR in dB.
struct SnrModel {
  std::vector<double> means_db{-33.0, -20.0};
  std::vector<double> weights{0.5, 0.5};
  double stddev_db = 2.0;
  bool noiseless = false;
};

struct SourceEvent {
  int seed_id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double start_s = 0.0;
  double gain = 1.0;
};

struct SceneSpec {
  double duration_s = 5.0;
  double sample_rate = 24000.0;
  Eigen::Vector3d area{100.0, 100.0, 100.0};
  Eigen::Vector3d mic{50.0, 50.0, 1.0};
  std::vector<SourceEvent> events;
  SnrModel snr;
  std::uint64_t seed = 0;
};

struct RenderedScene {
  AudioClip mix;
  std::vector<EventLabel> labels;
  Vector clean;  ///< post-rescale clean mixture
  Vector noise;  ///< post-rescale noise track
  double snr_db = 0.0;  ///< drawn SNR (infinite when noiseless)
  double scale = 1.0;   ///< global rescale applied to keep the mix in [-1, 1]
};

/// Delay in whole samples for a source at `distance` metres.
long propagation_delay_samples(double distance, double sample_rate);

/// Free-field render: each seed is delayed by d/c and attenuated by gain / max(d, 1 m).
RenderedScene render_scene(const SceneSpec& spec, std::span<const SeedSound> seeds);

struct DatasetConfig {
  std::map<int, int> quotas{{1, 10}, {3, 10}};  ///< max-polyp value -> clip count
  std::vector<int> classes{0, 1, 2, 3};
  int min_events = 1;
  int event_budget = 8;
  double duration_s = 5.0;
  double sample_rate = 24000.0;
  Eigen::Vector3d area{100.0, 100.0, 100.0};
  Eigen::Vector3d mic{50.0, 50.0, 1.0};
  SnrModel snr;
  double gain_min = 1.0;
  double gain_max = 1.0;
  double polyphony_step = 0.010;
  std::uint64_t seed = 0;
  long max_attempts = 2'000'000;
  std::vector<std::string> seed_wavs;  ///< optional recorded seeds, one per class id
};

struct GeneratedClip {
  std::string clip_id;
  RenderedScene scene;
  int stratum = 0;
  long attempt = 0;
};

void validate_dataset_config(const DatasetConfig& config);
std::vector<SeedSound> build_seeds(const DatasetConfig& config);
/// Draws a random scene from the attempt-indexed stream.
SceneSpec sample_scene(const DatasetConfig& config, std::span<const SeedSound> seeds, long attempt);
/// Rejection-samples scenes until every quota is met. Deterministic in config.seed.
std::vector<GeneratedClip> synthesize_dataset(const DatasetConfig& config);

nlohmann::ordered_json dataset_config_to_json(const DatasetConfig& config);
std::string dataset_config_json(const DatasetConfig& config);

/// Writes clips/<id>.wav, labels.jsonl and manifest.json under `out_dir`.
std::vector<GeneratedClip> generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

}  // namespace dydec
