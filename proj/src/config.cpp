#include "dydec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dydec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing '#' comment that is not inside a string literal.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

Json parse_value(const std::string& text) {
  const Json v = Json::parse(text, nullptr, false);
  if (v.is_discarded()) return Json(text);
  return v;
}

std::vector<std::string> split_dotted(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string p;
  while (std::getline(ss, p, '.')) {
    p = trim(p);
    if (p.empty()) throw Error("config: empty name component in '" + s + "'");
    parts.push_back(p);
  }
  return parts;
}

Json& descend(Json& root, const std::vector<std::string>& path, std::size_t count) {
  Json* node = &root;
  for (std::size_t i = 0; i < count; ++i) {
    Json& next = (*node)[path[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw Error("config: '" + path[i] + "' is not a section");
    node = &next;
  }
  return *node;
}

void check_keys(const Json& j, const std::set<std::string>& known, const char* section) {
  if (!j.is_object()) throw Error(std::string("config: [") + section + "] must be a table");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw Error(std::string("config: unknown key '") + k + "' in [" + section + "]");
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string("config: bad value for '") + key + "'");
  }
}

DecomposeMode parse_mode(const std::string& s) {
  if (s == "dyadic") return DecomposeMode::dyadic;
  if (s == "single_scale") return DecomposeMode::single_scale;
  throw Error("config: mode must be dyadic or single_scale");
}
NormMode parse_norm(const std::string& s) {
  if (s == "egnorm" || s == "full") return NormMode::egnorm;
  if (s == "batchnorm" || s == "bn") return NormMode::batchnorm;
  if (s == "none" || s == "nonorm") return NormMode::none;
  throw Error("config: norm must be egnorm, batchnorm or none");
}
HeadMode parse_head(const std::string& s) {
  if (s == "density") return HeadMode::density;
  if (s == "reg_count") return HeadMode::reg_count;
  throw Error("config: head must be density or reg_count");
}
Taper parse_taper(const std::string& s) {
  if (s == "hamming") return Taper::hamming;
  if (s == "none") return Taper::none;
  throw Error("config: taper must be hamming or none");
}

}  // namespace

std::string to_string(DecomposeMode mode) { return mode == DecomposeMode::dyadic ? "dyadic" : "single_scale"; }
std::string to_string(NormMode norm) {
  switch (norm) {
    case NormMode::egnorm: return "egnorm";
    case NormMode::batchnorm: return "batchnorm";
    case NormMode::none: return "none";
  }
  return "?";
}
std::string to_string(HeadMode head) { return head == HeadMode::density ? "density" : "reg_count"; }
std::string to_string(Taper taper) { return taper == Taper::hamming ? "hamming" : "none"; }

Json parse_config_text(const std::string& text, const std::string& origin) {
  Json root = Json::object();
  std::vector<std::string> section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(where + ": unterminated section header");
      section = split_dotted(line.substr(1, line.size() - 2));
      descend(root, section, section.size());
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(where + ": empty key");
    if (value.empty()) throw Error(where + ": empty value for '" + key + "'");
    std::vector<std::string> path = section;
    for (auto& p : split_dotted(key)) path.push_back(p);
    descend(root, path, path.size() - 1)[path.back()] = parse_value(value);
  }
  return root;
}

Json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("override '" + assignment + "' must look like section.key=value");
  const auto path = split_dotted(trim(assignment.substr(0, eq)));
  if (path.size() < 2) throw Error("override '" + assignment + "' needs a section, e.g. train.epochs=3");
  descend(config, path, path.size() - 1)[path.back()] = parse_value(trim(assignment.substr(eq + 1)));
}

Json model_config_to_json(const ModelConfig& c) {
  Json j;
  j["depth"] = c.frontend.depth;
  j["sample_rate"] = c.frontend.sample_rate;
  j["band_top"] = c.frontend.band_top;
  j["kernel_len"] = c.frontend.kernel_len;
  j["downsample_depths"] = c.frontend.downsample_depths;
  j["taper"] = to_string(c.frontend.taper);
  j["mode"] = to_string(c.frontend.mode);
  j["norm"] = to_string(c.frontend.norm);
  j["head"] = to_string(c.head);
  Json stages = Json::array();
  for (const auto& s : c.backbone.stages) stages.push_back({s.stride, s.out_channels});
  j["backbone_stages"] = stages;
  j["lowpass_len"] = c.backbone.lowpass_len;
  j["conv_width"] = c.backbone.conv_width;
  j["out_bias_init"] = c.backbone.out_bias_init ? Json(*c.backbone.out_bias_init) : Json(nullptr);
  return j;
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  check_keys(j, {"depth", "sample_rate", "band_top", "kernel_len", "downsample_depths", "taper", "mode", "norm",
                 "head", "backbone_stages", "lowpass_len", "conv_width", "out_bias_init", "preset"},
             "model");
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "default") c = default_model_config();
    else if (preset == "miniature") c = miniature_model_config();
    else throw Error("config: model.preset must be default or miniature");
  }
  read(j, "depth", c.frontend.depth);
  read(j, "sample_rate", c.frontend.sample_rate);
  read(j, "band_top", c.frontend.band_top);
  read(j, "kernel_len", c.frontend.kernel_len);
  read(j, "downsample_depths", c.frontend.downsample_depths);
  std::string s;
  if (j.contains("taper")) c.frontend.taper = parse_taper(j.at("taper").get<std::string>());
  if (j.contains("mode")) c.frontend.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("norm")) c.frontend.norm = parse_norm(j.at("norm").get<std::string>());
  if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
  if (j.contains("backbone_stages")) {
    std::vector<std::array<int, 2>> stages;
    read(j, "backbone_stages", stages);
    c.backbone.stages.clear();
    for (const auto& st : stages) c.backbone.stages.push_back({st[0], st[1]});
  }
  read(j, "lowpass_len", c.backbone.lowpass_len);
  read(j, "conv_width", c.backbone.conv_width);
  if (j.contains("out_bias_init")) {
    const Json& v = j.at("out_bias_init");
    if (v.is_null()) c.backbone.out_bias_init.reset();
    else if (v.is_number()) c.backbone.out_bias_init = v.get<double>();
    else throw Error("config: model.out_bias_init must be a number or null");
  }
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["decay_factor"] = c.decay_factor;
  j["decay_every"] = c.decay_every;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["val_fraction"] = c.val_fraction;
  j["eval_every"] = c.eval_every;
  j["max_steps"] = c.max_steps;
  j["bn_momentum"] = c.bn_momentum;
  j["normalized_cutoffs"] = c.normalized_cutoffs;
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  check_keys(j, {"learning_rate", "decay_factor", "decay_every", "epochs", "batch_size", "beta1", "beta2", "epsilon",
                 "seed", "val_fraction", "eval_every", "max_steps", "bn_momentum", "normalized_cutoffs"},
             "train");
  read(j, "learning_rate", c.learning_rate);
  read(j, "decay_factor", c.decay_factor);
  read(j, "decay_every", c.decay_every);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "seed", c.seed);
  read(j, "val_fraction", c.val_fraction);
  read(j, "eval_every", c.eval_every);
  read(j, "max_steps", c.max_steps);
  read(j, "bn_momentum", c.bn_momentum);
  read(j, "normalized_cutoffs", c.normalized_cutoffs);
  validate_train_config(c);
  return c;
}

DatasetConfig dataset_config_from_json(const Json& j, DatasetConfig c) {
  check_keys(j, {"quotas", "classes", "min_events", "event_budget", "duration_s", "sample_rate", "area", "mic", "snr",
                 "gain", "polyphony_step", "seed", "max_attempts", "seed_wavs"},
             "synth");
  if (j.contains("quotas")) {
    if (!j.at("quotas").is_object()) throw Error("config: synth.quotas must be a table of max_polyp -> count");
    c.quotas.clear();
    for (const auto& [k, v] : j.at("quotas").items()) {
      try {
        c.quotas[std::stoi(k)] = v.get<int>();
      } catch (const std::exception&) {
        throw Error("config: bad quota entry '" + k + "'");
      }
    }
  }
  read(j, "classes", c.classes);
  read(j, "min_events", c.min_events);
  read(j, "event_budget", c.event_budget);
  read(j, "duration_s", c.duration_s);
  read(j, "sample_rate", c.sample_rate);
  auto vec3 = [&](const char* key, Eigen::Vector3d& out) {
    if (!j.contains(key)) return;
    std::array<double, 3> a{};
    read(j, key, a);
    out = {a[0], a[1], a[2]};
  };
  vec3("area", c.area);
  vec3("mic", c.mic);
  if (j.contains("snr")) {
    const Json& s = j.at("snr");
    check_keys(s, {"means_db", "weights", "stddev_db", "noiseless"}, "synth.snr");
    read(s, "means_db", c.snr.means_db);
    read(s, "weights", c.snr.weights);
    read(s, "stddev_db", c.snr.stddev_db);
    read(s, "noiseless", c.snr.noiseless);
  }
  if (j.contains("gain")) {
    std::array<double, 2> g{};
    read(j, "gain", g);
    c.gain_min = g[0];
    c.gain_max = g[1];
  }
  read(j, "polyphony_step", c.polyphony_step);
  read(j, "seed", c.seed);
  read(j, "max_attempts", c.max_attempts);
  read(j, "seed_wavs", c.seed_wavs);
  validate_dataset_config(c);
  return c;
}

void apply_ablation(ModelConfig& config, const std::string& ablation) {
  if (ablation == "single_scale") config.frontend.mode = DecomposeMode::single_scale;
  else if (ablation == "bn") config.frontend.norm = NormMode::batchnorm;
  else if (ablation == "nonorm") config.frontend.norm = NormMode::none;
  else if (ablation == "reg_count") config.head = HeadMode::reg_count;
  else throw Error("unknown ablation '" + ablation + "' (single_scale, bn, nonorm, reg_count)");
}

}  // namespace dydec
