#include "dydec/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "dydec/binary_io.hpp"

namespace dydec {

namespace {

constexpr char kMagic[8] = {'D', 'Y', 'D', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kBackboneTag = 0x454e4b42;  // "BKNE"
constexpr std::uint32_t kAdamTag = 0x4d414441;      // "ADAM"

using namespace binio;

void put_vector(std::ostream& os, const Vector& v) {
  put_u64(os, static_cast<std::uint64_t>(v.size()));
  for (double x : v) put_f64(os, x);
}

Vector get_vector(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1ull << 31)) throw Error("checkpoint: implausible vector length");
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = get_f64(is);
  return v;
}

void put_matrix(std::ostream& os, const Matrix& m) {
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(os, m.data()[i]);
}

Matrix get_matrix(std::istream& is) {
  const std::uint64_t r = get_u64(is), c = get_u64(is);
  if (r > (1ull << 20) || c > (1ull << 20)) throw Error("checkpoint: implausible matrix shape");
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(is);
  return m;
}

void write_backbone(std::ostream& os, const BackboneParams& b) {
  put_u32(os, kBackboneTag);
  put_i32(os, b.lowpass_len);
  put_u64(os, b.layers.size());
  for (const auto& layer : b.layers) {
    put_i32(os, layer.stride);
    put_f64(os, layer.input_rate);
    put_vector(os, layer.lowpass_cutoff);
    put_u64(os, layer.weights.size());
    for (const auto& w : layer.weights) put_matrix(os, w);
    put_vector(os, layer.bias);
  }
  put_vector(os, b.out_weight);
  put_f64(os, b.out_bias);
}

BackboneParams read_backbone(std::istream& is) {
  expect_tag(is, kBackboneTag, "backbone");
  BackboneParams b;
  b.lowpass_len = get_i32(is);
  const std::uint64_t n = get_u64(is);
  if (n > 1024) throw Error("checkpoint: implausible layer count");
  for (std::uint64_t i = 0; i < n; ++i) {
    BackboneLayer layer;
    layer.stride = get_i32(is);
    layer.input_rate = get_f64(is);
    layer.lowpass_cutoff = get_vector(is);
    const std::uint64_t width = get_u64(is);
    if (width > 1024) throw Error("checkpoint: implausible conv width");
    for (std::uint64_t k = 0; k < width; ++k) layer.weights.push_back(get_matrix(is));
    layer.bias = get_vector(is);
    b.layers.push_back(std::move(layer));
  }
  b.out_weight = get_vector(is);
  b.out_bias = get_f64(is);
  return b;
}

void write_model(std::ostream& os, const Model& m) {
  put_string(os, model_config_to_json(m.config).dump());
  write_tree(os, m.tree);
  write_backbone(os, m.backbone);
  put_f64(os, m.head.weight);
  put_f64(os, m.head.bias);
}

Model read_model(std::istream& is) {
  Model m;
  const Json cfg = Json::parse(get_string(is), nullptr, false);
  if (cfg.is_discarded()) throw Error("checkpoint: corrupt model config");
  m.config = model_config_from_json(cfg);
  m.tree = read_tree(is);
  m.backbone = read_backbone(is);
  m.head.weight = get_f64(is);
  m.head.bias = get_f64(is);
  if (static_cast<std::size_t>(parameter_count(m)) == 0) throw Error("checkpoint: empty model");
  return m;
}

Json model_summary(const Model& m) {
  Json j;
  j["config"] = model_config_to_json(m.config);
  j["parameters"] = parameter_count(m);
  j["leaves"] = m.tree.leaf_count();
  j["head"] = {{"weight", m.head.weight}, {"bias", m.head.bias}};
  return j;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const TrainState& s = ck.state;
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    put_string(os, train_config_to_json(ck.train).dump());
    put_string(os, ck.extra.dump());
    write_model(os, s.model);
    put_u32(os, kAdamTag);
    put_u64(os, static_cast<std::uint64_t>(s.adam.step));
    put_vector(os, s.adam.m);
    put_vector(os, s.adam.v);
    put_i32(os, s.epoch);
    put_i32(os, s.batch_in_epoch);
    put_u64(os, static_cast<std::uint64_t>(s.step));
    put_f64(os, s.best_score);
    const bool has_best = std::isfinite(s.best_score);
    put_u32(os, has_best ? 1 : 0);
    if (has_best) write_model(os, s.best);
    if (!os) throw Error("write failed for checkpoint " + path.string());
  }

  Json side;
  side["format"] = "DYDECKPT";
  side["version"] = kVersion;
  side["train"] = train_config_to_json(ck.train);
  side["model"] = model_summary(s.model);
  side["cursor"] = {{"epoch", s.epoch}, {"batch_in_epoch", s.batch_in_epoch}, {"step", s.step}};
  side["best_score"] = std::isfinite(s.best_score) ? Json(s.best_score) : Json(nullptr);
  side["extra"] = ck.extra;
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  if (!js) throw Error("cannot write checkpoint sidecar for " + path.string());
  js << side.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic))
    throw Error(path.string() + " is not a checkpoint");
  if (get_u32(is) != kVersion) throw Error("checkpoint: unsupported version");

  Checkpoint ck;
  const Json train = Json::parse(get_string(is), nullptr, false);
  if (train.is_discarded()) throw Error("checkpoint: corrupt train config");
  ck.train = train_config_from_json(train);
  ck.extra = Json::parse(get_string(is), nullptr, false);
  if (ck.extra.is_discarded()) throw Error("checkpoint: corrupt metadata");

  TrainState& s = ck.state;
  s.model = read_model(is);
  expect_tag(is, kAdamTag, "optimizer");
  s.adam.step = static_cast<long>(get_u64(is));
  s.adam.m = get_vector(is);
  s.adam.v = get_vector(is);
  const auto n = static_cast<Eigen::Index>(parameter_count(s.model));
  if ((s.adam.m.size() != 0 && s.adam.m.size() != n) || s.adam.m.size() != s.adam.v.size())
    throw Error("checkpoint: optimizer state does not match the model");
  s.epoch = get_i32(is);
  s.batch_in_epoch = get_i32(is);
  s.step = static_cast<long>(get_u64(is));
  s.best_score = get_f64(is);
  if (get_u32(is) != 0) s.best = read_model(is);
  else s.best = s.model;
  return ck;
}

Model load_model(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  return std::isfinite(ck.state.best_score) ? std::move(ck.state.best) : std::move(ck.state.model);
}

Checkpoint checkpoint_for_model(const Model& model, const TrainConfig& train) {
  Checkpoint ck;
  ck.train = train;
  ck.state = init_train_state(model);
  return ck;
}

}  // namespace dydec
