#include "dydec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>

#include "dydec/metrics.hpp"
#include "dydec/wav.hpp"

namespace dydec {

ChirpParams seed_family(int family) {
  switch (family) {
    case 0: return {3000.0, 4500.0, 0.35, 18.0, 0.8, 1};  // fast rising trill
    case 1: return {900.0, 600.0, 0.60, 6.0, 0.5, 3};     // nasal falling call
    case 2: return {2200.0, 1400.0, 0.80, 0.0, 0.0, 2};   // descending scream
    case 3: return {500.0, 800.0, 1.20, 3.0, 0.3, 5};     // long harmonic crow
    default: break;
  }
  throw Error("seed_family: unknown family " + std::to_string(family));
}

namespace {

void peak_normalize(Vector& w) {
  const double peak = w.cwiseAbs().maxCoeff();
  if (peak > 0.0) w /= peak;
}

}  // namespace

SeedSound make_seed_sound(int family, double sample_rate) {
  ChirpParams p = seed_family(family);
  const double limit = 0.45 * sample_rate;
  const double top = std::max(p.f0, p.f1);
  if (top > limit) {
    p.f0 *= limit / top;
    p.f1 *= limit / top;
  }
  const auto n = static_cast<Eigen::Index>(std::lround(p.duration * sample_rate));
  Vector w = Vector::Zero(n);
  const double attack = 0.1 * p.duration;
  const double release = 0.2 * p.duration;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double phase = 2.0 * std::numbers::pi * (p.f0 * t + (p.f1 - p.f0) * t * t / (2.0 * p.duration));
    const double inst = p.f0 + (p.f1 - p.f0) * t / p.duration;
    double tone = 0.0;
    for (int h = 1; h <= p.harmonics; ++h)
      if (h * inst < limit) tone += std::sin(h * phase) / h;
    double env = 1.0;
    if (t < attack) env = 0.5 - 0.5 * std::cos(std::numbers::pi * t / attack);
    else if (t > p.duration - release) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (p.duration - t) / release);
    const double am = (1.0 + p.am_depth * std::sin(2.0 * std::numbers::pi * p.am_rate * t)) / (1.0 + p.am_depth);
    w[i] = env * am * tone;
  }
  peak_normalize(w);
  return {family, p, std::move(w)};
}

SeedSound seed_from_waveform(int seed_id, const AudioClip& clip, double sample_rate) {
  if (std::abs(clip.sample_rate - sample_rate) > 1e-9)
    throw Error("seed_from_waveform: seed sample rate does not match dataset rate");
  const auto n = std::min<Eigen::Index>(clip.size(), static_cast<Eigen::Index>(kMaxSeedDuration * sample_rate));
  if (n == 0) throw Error("seed_from_waveform: empty seed");
  SeedSound s;
  s.seed_id = seed_id;
  s.params.duration = static_cast<double>(n) / sample_rate;
  s.waveform = clip.samples.head(n);
  peak_normalize(s.waveform);
  return s;
}

long propagation_delay_samples(double distance, double sample_rate) {
  return std::lround(distance / kSpeedOfSound * sample_rate);
}

RenderedScene render_scene(const SceneSpec& spec, std::span<const SeedSound> seeds) {
  const auto n = static_cast<Eigen::Index>(std::lround(spec.duration_s * spec.sample_rate));
  if (n <= 0) throw Error("render_scene: empty clip");
  RenderedScene out;
  out.clean = Vector::Zero(n);
  for (const auto& ev : spec.events) {
    const auto it = std::find_if(seeds.begin(), seeds.end(), [&](const SeedSound& s) { return s.seed_id == ev.seed_id; });
    if (it == seeds.end()) throw Error("render_scene: unknown seed id " + std::to_string(ev.seed_id));
    if ((ev.position.array() < 0.0).any() || (ev.position.array() > spec.area.array()).any())
      throw Error("render_scene: source position outside the area");
    const double dist = (ev.position - spec.mic).norm();
    const double atten = ev.gain / std::max(dist, kMinDistance);
    const long start = std::lround(ev.start_s * spec.sample_rate);
    const long offset = start + propagation_delay_samples(dist, spec.sample_rate);
    const Eigen::Index len = it->waveform.size();
    if (start < 0 || offset + len > n) throw Error("render_scene: delayed event exits the clip");
    out.clean.segment(offset, len) += atten * it->waveform;
    out.labels.push_back({static_cast<double>(offset) / spec.sample_rate,
                          static_cast<double>(offset + len) / spec.sample_rate, ev.seed_id});
  }

  std::mt19937_64 rng(spec.seed);
  out.noise = Vector::Zero(n);
  out.snr_db = std::numeric_limits<double>::infinity();
  const double p_clean = out.clean.squaredNorm() / static_cast<double>(n);
  if (!spec.snr.noiseless && p_clean > 0.0) {
    std::discrete_distribution<int> pick(spec.snr.weights.begin(), spec.snr.weights.end());
    const int mode = pick(rng);
    std::normal_distribution<double> snr(spec.snr.means_db.at(static_cast<std::size_t>(mode)), spec.snr.stddev_db);
    out.snr_db = snr(rng);
    const double std_noise = std::sqrt(p_clean / std::pow(10.0, out.snr_db / 10.0));
    std::normal_distribution<double> white(0.0, std_noise);
    for (auto& v : out.noise) v = white(rng);
  }

  Vector mix = out.clean + out.noise;
  const double peak = mix.cwiseAbs().maxCoeff();
  if (peak > 1.0) {
    out.scale = 1.0 / peak;
    out.clean *= out.scale;
    out.noise *= out.scale;
    mix *= out.scale;
  }
  out.mix = AudioClip{std::move(mix), spec.sample_rate};
  return out;
}

void validate_dataset_config(const DatasetConfig& c) {
  if (!(c.duration_s > 0.0) || !(c.sample_rate > 0.0)) throw Error("dataset config: bad duration or rate");
  if (c.classes.empty()) throw Error("dataset config: class list is empty");
  if (c.min_events < 0 || c.event_budget < std::max(1, c.min_events))
    throw Error("dataset config: bad event budget");
  if (c.snr.means_db.size() != c.snr.weights.size() || c.snr.means_db.empty())
    throw Error("dataset config: SNR means and weights must have equal nonzero length");
  if ((c.mic.array() < 0.0).any() || (c.mic.array() > c.area.array()).any())
    throw Error("dataset config: microphone outside the area");
  if (c.gain_min > c.gain_max || c.gain_min <= 0.0) throw Error("dataset config: bad gain range");
  for (const auto& [k, count] : c.quotas) {
    if (count < 0) throw Error("dataset config: negative quota");
    if (count == 0) continue;
    if (k > c.event_budget || k < 0 || (k == 0 && c.min_events > 0))
      throw Error("dataset config: quota for max_polyp=" + std::to_string(k) +
                  " is unsatisfiable with event budget " + std::to_string(c.event_budget));
  }
  if (!c.seed_wavs.empty() && c.seed_wavs.size() < c.classes.size())
    throw Error("dataset config: seed_wavs must list one file per class");
}

std::vector<SeedSound> build_seeds(const DatasetConfig& c) {
  std::vector<SeedSound> seeds;
  for (std::size_t i = 0; i < c.classes.size(); ++i) {
    if (c.seed_wavs.empty()) seeds.push_back(make_seed_sound(c.classes[i], c.sample_rate));
    else seeds.push_back(seed_from_waveform(c.classes[i], read_wav(c.seed_wavs[i]), c.sample_rate));
  }
  for (const auto& s : seeds)
    if (static_cast<double>(s.waveform.size()) / c.sample_rate > c.duration_s)
      throw Error("dataset config: seed sound longer than the clip");
  return seeds;
}

SceneSpec sample_scene(const DatasetConfig& c, std::span<const SeedSound> seeds, long attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(c.seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(c.seed >> 32),
                    static_cast<std::uint32_t>(attempt & 0xFFFFFFFF), static_cast<std::uint32_t>(attempt >> 32)};
  std::mt19937_64 rng(seq);
  SceneSpec spec;
  spec.duration_s = c.duration_s;
  spec.sample_rate = c.sample_rate;
  spec.area = c.area;
  spec.mic = c.mic;
  spec.snr = c.snr;
  spec.seed = rng();

  std::uniform_int_distribution<int> count(c.min_events, c.event_budget);
  std::uniform_int_distribution<std::size_t> cls(0, seeds.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> gain(c.gain_min, c.gain_max);
  const int n = count(rng);
  for (int e = 0; e < n; ++e) {
    const SeedSound& seed = seeds[cls(rng)];
    const double len = static_cast<double>(seed.waveform.size()) / c.sample_rate;
    SourceEvent ev;
    ev.seed_id = seed.seed_id;
    ev.gain = gain(rng);
    for (int tries = 0;; ++tries) {
      if (tries > 1000) throw Error("sample_scene: cannot place event inside the clip");
      for (int k = 0; k < 3; ++k) ev.position[k] = unit(rng) * c.area[k];
      const double dist = (ev.position - c.mic).norm();
      const double delay = static_cast<double>(propagation_delay_samples(dist, c.sample_rate)) / c.sample_rate;
      // Leave one sample of slack for the start-time rounding.
      const double latest = c.duration_s - len - delay - 1.0 / c.sample_rate;
      if (latest < 0.0) continue;
      ev.start_s = unit(rng) * latest;
      break;
    }
    spec.events.push_back(ev);
  }
  return spec;
}

namespace {

std::string clip_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%05zu", index);
  return buf;
}

// Calls `sink` for each accepted clip in acceptance order.
void synthesize_each(const DatasetConfig& c, const std::function<void(GeneratedClip&&)>& sink) {
  validate_dataset_config(c);
  const std::vector<SeedSound> seeds = build_seeds(c);
  std::map<int, int> remaining;
  int total = 0;
  for (const auto& [k, count] : c.quotas)
    if (count > 0) {
      remaining[k] = count;
      total += count;
    }
  std::size_t accepted = 0;
  for (long attempt = 0; total > 0; ++attempt) {
    if (attempt >= c.max_attempts) throw Error("synthesize_dataset: attempt budget exhausted before quotas were met");
    SceneSpec spec = sample_scene(c, seeds, attempt);
    // Polyphony of the delayed intervals decides the stratum before any audio is rendered.
    std::vector<EventLabel> labels;
    for (const auto& ev : spec.events) {
      const auto& seed = *std::find_if(seeds.begin(), seeds.end(), [&](const SeedSound& s) { return s.seed_id == ev.seed_id; });
      const long offset = std::lround(ev.start_s * c.sample_rate) +
                          propagation_delay_samples((ev.position - c.mic).norm(), c.sample_rate);
      labels.push_back({offset / c.sample_rate, (offset + seed.waveform.size()) / c.sample_rate, ev.seed_id});
    }
    const int steps = std::max(1, static_cast<int>(std::lround(c.duration_s / c.polyphony_step)));
    const int stratum = max_polyp(polyphony_vector(labels, steps, c.duration_s));
    auto it = remaining.find(stratum);
    if (it == remaining.end() || it->second == 0) continue;
    --it->second;
    --total;
    GeneratedClip clip{clip_name(accepted++), render_scene(spec, seeds), stratum, attempt};
    sink(std::move(clip));
  }
}

}  // namespace

nlohmann::ordered_json dataset_config_to_json(const DatasetConfig& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json q = nlohmann::ordered_json::object();
  for (const auto& [k, v] : c.quotas) q[std::to_string(k)] = v;
  j["quotas"] = q;
  j["classes"] = c.classes;
  j["min_events"] = c.min_events;
  j["event_budget"] = c.event_budget;
  j["duration_s"] = c.duration_s;
  j["sample_rate"] = c.sample_rate;
  j["area"] = {c.area[0], c.area[1], c.area[2]};
  j["mic"] = {c.mic[0], c.mic[1], c.mic[2]};
  j["snr"] = {{"means_db", c.snr.means_db}, {"weights", c.snr.weights},
              {"stddev_db", c.snr.stddev_db}, {"noiseless", c.snr.noiseless}};
  j["gain"] = {c.gain_min, c.gain_max};
  j["polyphony_step"] = c.polyphony_step;
  j["seed"] = c.seed;
  j["max_attempts"] = c.max_attempts;
  j["seed_wavs"] = c.seed_wavs;
  return j;
}

std::string dataset_config_json(const DatasetConfig& config) { return dataset_config_to_json(config).dump(2); }

std::vector<GeneratedClip> synthesize_dataset(const DatasetConfig& config) {
  std::vector<GeneratedClip> out;
  synthesize_each(config, [&](GeneratedClip&& c) { out.push_back(std::move(c)); });
  return out;
}

std::vector<GeneratedClip> generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "clips");
  std::vector<ClipLabels> labels;
  nlohmann::ordered_json clips = nlohmann::ordered_json::array();
  std::vector<GeneratedClip> summary;
  synthesize_each(config, [&](GeneratedClip&& c) {
    const std::string file = "clips/" + c.clip_id + ".wav";
    write_wav((out_dir / file).string(), c.scene.mix);
    labels.push_back({c.clip_id, config.duration_s, c.scene.labels});
    nlohmann::ordered_json e;
    e["clip_id"] = c.clip_id;
    e["file"] = file;
    e["max_polyp"] = c.stratum;
    e["events"] = c.scene.labels.size();
    e["snr_db"] = std::isfinite(c.scene.snr_db) ? nlohmann::ordered_json(c.scene.snr_db) : nlohmann::ordered_json(nullptr);
    e["attempt"] = c.attempt;
    clips.push_back(e);
    // Audio tracks are on disk; keep only the metadata.
    c.scene.clean.resize(0);
    c.scene.noise.resize(0);
    c.scene.mix.samples.resize(0);
    summary.push_back(std::move(c));
  });
  write_labels_jsonl((out_dir / "labels.jsonl").string(), labels);

  nlohmann::ordered_json manifest;
  manifest["format_version"] = 1;
  manifest["generator"] = "dydec synth";
  manifest["seed"] = config.seed;
  manifest["config"] = dataset_config_to_json(config);
  manifest["clips"] = clips;
  std::ofstream(out_dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
  return summary;
}

}  // namespace dydec
