#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dydec/types.hpp"

namespace dydec {

/// Ground-truth event interval in seconds. Counting ignores class_id.
struct EventLabel {
  double t_start = 0.0;
  double t_end = 0.0;
  std::optional<int> class_id;
};

struct DensityVector {
  Vector values;
  double frame_duration = 0.0;
};

/// Rejects events that are empty, inverted or outside [0, clip_len].
void validate_labels(std::span<const EventLabel> labels, double clip_len);

/// Spreads mass 1 per event across frames in proportion to temporal overlap.
DensityVector make_density_target(std::span<const EventLabel> labels, int frames, double clip_len);

double count_from_density(const DensityVector& d);

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

/// mean((pred - target)^2) and its gradient 2 (pred - target) / frames.
LossAndGrad mse_density_loss(const Vector& pred, const Vector& target);

/// Direct count regression: weight * mean(frame_scores) + bias.
struct CountHead {
  double weight = 1.0;
  double bias = 0.0;
};
double regress_count_head(const Vector& frame_scores, const CountHead& head);

/// One clip of a label file.
struct ClipLabels {
  std::string clip_id;
  double duration_s = 0.0;
  std::vector<EventLabel> events;
};

/// JSON-lines label files: {clip_id, duration_s, events: [{t_start, t_end, class_id}]}.
std::vector<ClipLabels> read_labels_jsonl(const std::string& path);
void write_labels_jsonl(const std::string& path, std::span<const ClipLabels> clips);
std::string labels_to_json_line(const ClipLabels& clip);

}  // namespace dydec
