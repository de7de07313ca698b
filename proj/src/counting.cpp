#include "dydec/counting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace dydec {

void validate_labels(std::span<const EventLabel> labels, double clip_len) {
  for (const auto& e : labels) {
    if (!(e.t_start >= 0.0) || !(e.t_end > e.t_start) || e.t_end > clip_len + 1e-12)
      throw Error("event [" + std::to_string(e.t_start) + ", " + std::to_string(e.t_end) +
                  "] outside clip of length " + std::to_string(clip_len));
  }
}

DensityVector make_density_target(std::span<const EventLabel> labels, int frames, double clip_len) {
  if (frames < 1) throw Error("make_density_target: frames must be positive");
  if (!(clip_len > 0.0)) throw Error("make_density_target: clip length must be positive");
  validate_labels(labels, clip_len);
  DensityVector d{Vector::Zero(frames), clip_len / frames};
  const double dt = d.frame_duration;
  for (const auto& e : labels) {
    const int first = std::clamp(static_cast<int>(std::floor(e.t_start / dt)), 0, frames - 1);
    const int last = std::clamp(static_cast<int>(std::ceil(e.t_end / dt)) - 1, first, frames - 1);
    // Accumulate overlaps, then renormalize so each event carries exactly unit mass.
    double total = 0.0;
    std::vector<double> share(static_cast<std::size_t>(last - first + 1));
    for (int f = first; f <= last; ++f) {
      const double lo = std::max(e.t_start, f * dt);
      const double hi = std::min(e.t_end, (f + 1) * dt);
      const double ov = std::max(0.0, hi - lo);
      share[static_cast<std::size_t>(f - first)] = ov;
      total += ov;
    }
    if (total <= 0.0) {
      d.values[first] += 1.0;
      continue;
    }
    for (int f = first; f <= last; ++f) d.values[f] += share[static_cast<std::size_t>(f - first)] / total;
  }
  return d;
}

double count_from_density(const DensityVector& d) { return d.values.sum(); }

LossAndGrad mse_density_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size() || pred.size() == 0)
    throw Error("mse_density_loss: length mismatch");
  const Vector diff = pred - target;
  const auto n = static_cast<double>(pred.size());
  return {diff.squaredNorm() / n, 2.0 * diff / n};
}

double regress_count_head(const Vector& frame_scores, const CountHead& head) {
  if (frame_scores.size() == 0) throw Error("regress_count_head: empty frame scores");
  return head.weight * frame_scores.mean() + head.bias;
}

namespace {

ClipLabels clip_from_json(const nlohmann::json& j) {
  ClipLabels c;
  c.clip_id = j.at("clip_id").get<std::string>();
  c.duration_s = j.at("duration_s").get<double>();
  for (const auto& e : j.at("events")) {
    EventLabel l;
    l.t_start = e.at("t_start").get<double>();
    l.t_end = e.at("t_end").get<double>();
    if (e.contains("class_id") && !e.at("class_id").is_null()) l.class_id = e.at("class_id").get<int>();
    c.events.push_back(l);
  }
  validate_labels(c.events, c.duration_s);
  return c;
}

}  // namespace

std::string labels_to_json_line(const ClipLabels& clip) {
  nlohmann::ordered_json j;
  j["clip_id"] = clip.clip_id;
  j["duration_s"] = clip.duration_s;
  j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : clip.events) {
    nlohmann::ordered_json ev;
    ev["t_start"] = e.t_start;
    ev["t_end"] = e.t_end;
    ev["class_id"] = e.class_id ? nlohmann::ordered_json(*e.class_id) : nlohmann::ordered_json(nullptr);
    j["events"].push_back(ev);
  }
  return j.dump();
}

std::vector<ClipLabels> read_labels_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open label file " + path);
  std::vector<ClipLabels> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(clip_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_labels_jsonl(const std::string& path, std::span<const ClipLabels> clips) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write label file " + path);
  for (const auto& c : clips) out << labels_to_json_line(c) << '\n';
}

}  // namespace dydec
