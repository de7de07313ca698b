#include "dydec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace dydec {

PolyphonyVector polyphony_vector(std::span<const EventLabel> labels, int steps, double clip_len) {
  if (steps < 1) throw Error("polyphony_vector: steps must be positive");
  if (!(clip_len > 0.0)) throw Error("polyphony_vector: clip length must be positive");
  const double dt = clip_len / steps;
  std::vector<int> diff(static_cast<std::size_t>(steps) + 1, 0);
  for (const auto& e : labels) {
    if (!(e.t_end > e.t_start)) continue;
    // first: smallest i with t_start < (i+1) dt; last: largest i with t_end > i dt.
    int first = std::max(0, static_cast<int>(std::floor(e.t_start / dt)) - 1);
    while (first < steps && !(e.t_start < (first + 1) * dt)) ++first;
    int last = std::min(steps - 1, static_cast<int>(std::ceil(e.t_end / dt)) + 1);
    while (last >= 0 && !(e.t_end > last * dt)) --last;
    if (first > last) continue;
    ++diff[static_cast<std::size_t>(first)];
    --diff[static_cast<std::size_t>(last) + 1];
  }
  PolyphonyVector v{std::vector<int>(static_cast<std::size_t>(steps)), dt};
  int run = 0;
  for (int i = 0; i < steps; ++i) {
    run += diff[static_cast<std::size_t>(i)];
    v.p[static_cast<std::size_t>(i)] = run;
  }
  return v;
}

PolyphonyVector polyphony_vector(std::span<const EventLabel> labels, double clip_len) {
  const int steps = std::max(1, static_cast<int>(std::lround(clip_len / kDefaultPolyphonyStep)));
  return polyphony_vector(labels, steps, clip_len);
}

double ratio_polyp(const PolyphonyVector& v) {
  if (v.p.empty()) return 0.0;
  const auto poly = std::count_if(v.p.begin(), v.p.end(), [](int p) { return p >= 2; });
  return static_cast<double>(poly) / static_cast<double>(v.p.size());
}

int max_polyp(const PolyphonyVector& v) {
  return v.p.empty() ? 0 : *std::max_element(v.p.begin(), v.p.end());
}

double mean_polyp(const PolyphonyVector& v) {
  if (v.p.empty()) return 0.0;
  long excess = 0;
  for (int p : v.p) excess += std::max(p - 1, 0);
  return static_cast<double>(excess) / static_cast<double>(v.p.size());
}

namespace {
void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("metrics: truth/prediction length mismatch");
  if (a.empty()) throw Error("metrics: empty input");
}
}  // namespace

double mae(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - pred[i]);
  return s / static_cast<double>(truth.size());
}

double mse(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return std::sqrt(s / static_cast<double>(truth.size()));
}

double accu_rate(std::span<const double> truth, std::span<const double> pred, int tolerance) {
  check_pair(truth, pred);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (std::abs(truth[i] - std::round(pred[i])) <= tolerance) ++hits;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Stratum parse_stratum(const std::string& s) {
  if (s == "max" || s == "max_polyp") return Stratum::max_polyp;
  if (s == "ratio" || s == "ratio_polyp") return Stratum::ratio_polyp;
  if (s == "mean" || s == "mean_polyp") return Stratum::mean_polyp;
  throw Error("unknown stratum '" + s + "' (expected max, ratio or mean)");
}

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::max_polyp: return "max_polyp";
    case Stratum::ratio_polyp: return "ratio_polyp";
    case Stratum::mean_polyp: return "mean_polyp";
  }
  return "?";
}

ClipResult make_clip_result(const ClipLabels& labels, double predicted) {
  const PolyphonyVector v = polyphony_vector(labels.events, labels.duration_s);
  return {labels.clip_id, static_cast<double>(labels.events.size()), predicted,
          ratio_polyp(v), max_polyp(v), mean_polyp(v)};
}

namespace {

StratumRow summarize(std::string label, double lo, double hi, const std::vector<const ClipResult*>& members) {
  StratumRow row{std::move(label), lo, hi, members.size(), {}, {}, {}, {}};
  if (members.empty()) return row;
  std::vector<double> t, p;
  for (const auto* r : members) {
    t.push_back(r->truth);
    p.push_back(r->predicted);
  }
  row.mae = mae(t, p);
  row.mse = mse(t, p);
  row.accu0 = accu_rate(t, p, 0);
  row.accu1 = accu_rate(t, p, 1);
  return row;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

StratifiedReport stratified_report(std::span<const ClipResult> results, Stratum stratum) {
  StratifiedReport rep;
  rep.stratum = stratum;
  std::vector<const ClipResult*> all;
  for (const auto& r : results) all.push_back(&r);
  rep.overall = summarize("all", 0.0, 0.0, all);
  if (results.empty()) return rep;

  if (stratum == Stratum::max_polyp) {
    int lo = results.front().max, hi = lo;
    for (const auto& r : results) {
      lo = std::min(lo, r.max);
      hi = std::max(hi, r.max);
    }
    for (int k = lo; k <= hi; ++k) {
      std::vector<const ClipResult*> m;
      for (const auto& r : results)
        if (r.max == k) m.push_back(&r);
      rep.rows.push_back(summarize(std::to_string(k), k, k, m));
    }
    return rep;
  }

  auto value = [stratum](const ClipResult& r) {
    return stratum == Stratum::ratio_polyp ? r.ratio : r.mean;
  };
  double top = 1.0;
  if (stratum == Stratum::mean_polyp) {
    top = 0.0;
    for (const auto& r : results) top = std::max(top, r.mean);
  }
  constexpr int kBins = 10;
  const double width = top > 0.0 ? top / kBins : 0.0;
  for (int b = 0; b < kBins; ++b) {
    const double lo = b * width;
    const double hi = (b + 1) * width;
    std::vector<const ClipResult*> m;
    for (const auto& r : results) {
      const double v = value(r);
      const int idx = width > 0.0 ? std::min(kBins - 1, static_cast<int>(std::floor(v / width))) : 0;
      if (idx == b) m.push_back(&r);
    }
    rep.rows.push_back(summarize("[" + fmt(lo) + "," + fmt(hi) + (b == kBins - 1 ? "]" : ")"), lo, hi, m));
    if (width == 0.0) break;
  }
  return rep;
}

std::string report_csv(const StratifiedReport& report) {
  std::ostringstream os;
  os << "stratum,bin,lo,hi,population,MAE,MSE (RMS),AccuRate(p=0),AccuRate(p=1)\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("n/a"); };
  auto line = [&](const StratumRow& r) {
    os << to_string(report.stratum) << ',' << '"' << r.label << '"' << ',' << fmt(r.lo) << ','
       << fmt(r.hi) << ',' << r.population << ',' << opt(r.mae) << ',' << opt(r.mse) << ','
       << opt(r.accu0) << ',' << opt(r.accu1) << '\n';
  };
  for (const auto& r : report.rows) line(r);
  line(report.overall);
  return os.str();
}

std::string report_json(const StratifiedReport& report) {
  using nlohmann::ordered_json;
  auto row = [](const StratumRow& r) {
    ordered_json j;
    j["bin"] = r.label;
    j["lo"] = r.lo;
    j["hi"] = r.hi;
    j["population"] = r.population;
    auto put = [&j](const char* k, const std::optional<double>& v) {
      j[k] = v ? ordered_json(*v) : ordered_json("n/a");
    };
    put("mae", r.mae);
    put("mse_rms", r.mse);
    put("accu_rate_p0", r.accu0);
    put("accu_rate_p1", r.accu1);
    return j;
  };
  ordered_json j;
  j["stratum"] = to_string(report.stratum);
  j["bins"] = ordered_json::array();
  for (const auto& r : report.rows) j["bins"].push_back(row(r));
  j["overall"] = row(report.overall);
  return j.dump(2);
}

}  // namespace dydec
