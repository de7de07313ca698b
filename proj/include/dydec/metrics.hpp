#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dydec/counting.hpp"

namespace dydec {

inline constexpr double kDefaultPolyphonyStep = 0.010;

/// Number of active events per uniform time step.
struct PolyphonyVector {
  std::vector<int> p;
  double step = kDefaultPolyphonyStep;
};

/// p_i = number of events intersecting the half-open step [i*dt, (i+1)*dt).
PolyphonyVector polyphony_vector(std::span<const EventLabel> labels, int steps, double clip_len);
/// Convenience: steps derived from the default 10 ms step.
PolyphonyVector polyphony_vector(std::span<const EventLabel> labels, double clip_len);

double ratio_polyp(const PolyphonyVector& v);
int max_polyp(const PolyphonyVector& v);
double mean_polyp(const PolyphonyVector& v);

double mae(std::span<const double> truth, std::span<const double> pred);
/// Root of the mean squared error; reported as "MSE (RMS)".
double mse(std::span<const double> truth, std::span<const double> pred);
/// Fraction of clips whose rounded prediction lies within `tolerance` of the truth.
double accu_rate(std::span<const double> truth, std::span<const double> pred, int tolerance);

enum class Stratum { max_polyp, ratio_polyp, mean_polyp };
Stratum parse_stratum(const std::string& s);
std::string to_string(Stratum s);

struct ClipResult {
  std::string clip_id;
  double truth = 0.0;
  double predicted = 0.0;
  double ratio = 0.0;
  int max = 0;
  double mean = 0.0;
};

ClipResult make_clip_result(const ClipLabels& labels, double predicted);

struct StratumRow {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t population = 0;
  std::optional<double> mae, mse, accu0, accu1;  ///< empty when population == 0
};

struct StratifiedReport {
  Stratum stratum = Stratum::max_polyp;
  std::vector<StratumRow> rows;
  StratumRow overall;
};

/// Per-bin metrics. max-polyp uses integer bins; ratio/mean use ten equal-width bins over
/// [0, 1] and [0, observed max] respectively.
StratifiedReport stratified_report(std::span<const ClipResult> results, Stratum stratum);
std::string report_csv(const StratifiedReport& report);
std::string report_json(const StratifiedReport& report);

}  // namespace dydec
