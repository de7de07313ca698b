#include "dydec/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dydec/metrics.hpp"
#include "dydec/parallel.hpp"
#include "dydec/wav.hpp"

namespace dydec {

void validate_train_config(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw Error("train config: learning_rate must be positive");
  if (!(c.decay_factor > 0.0)) throw Error("train config: decay_factor must be positive");
  if (c.decay_every < 1) throw Error("train config: decay_every must be >= 1");
  if (c.epochs < 1) throw Error("train config: epochs must be >= 1");
  if (c.batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw Error("train config: Adam betas must lie in [0, 1)");
  if (!(c.epsilon > 0.0)) throw Error("train config: epsilon must be positive");
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw Error("train config: val_fraction must lie in [0, 1)");
  if (c.eval_every < 1) throw Error("train config: eval_every must be >= 1");
  if (c.max_steps < 0) throw Error("train config: max_steps must be >= 0");
  if (!(c.bn_momentum >= 0.0 && c.bn_momentum <= 1.0)) throw Error("train config: bn_momentum must lie in [0, 1]");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  return config.learning_rate * std::pow(config.decay_factor, epoch / config.decay_every);
}

Example make_example(std::string id, AudioClip clip, std::vector<EventLabel> events, const Model& model) {
  const auto frames = static_cast<int>(model.output_frames(clip.size()));
  if (frames < 1) throw Error("example " + id + ": clip too short for the model");
  Example e;
  e.density = make_density_target(events, frames, clip.duration()).values;
  e.count = static_cast<double>(events.size());
  e.id = std::move(id);
  e.clip = std::move(clip);
  e.events = std::move(events);
  return e;
}

std::vector<Example> load_dataset(const std::filesystem::path& dir, const Model& model) {
  const auto labels = read_labels_jsonl((dir / "labels.jsonl").string());
  std::vector<Example> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    AudioClip clip = read_wav((dir / "clips" / (l.clip_id + ".wav")).string());
    if (std::abs(clip.sample_rate - model.tree.base_sample_rate) > 1e-9)
      throw Error("dataset clip " + l.clip_id + ": sample rate does not match the model");
    out.push_back(make_example(l.clip_id, std::move(clip), l.events, model));
  }
  return out;
}

namespace {

Matrix as_row(const Vector& v) { return Eigen::Map<const Matrix>(v.data(), 1, v.size()); }

}  // namespace

StepResult forward_backward(const Model& model, std::span<const Example* const> batch, bool training) {
  if (batch.empty()) throw Error("forward_backward: empty batch");
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<Matrix> input(n);
  for (std::size_t b = 0; b < n; ++b) input[b] = as_row(batch[b]->clip.samples);

  StepResult r;
  r.grads = zeros_like(model);
  GradTape tape;
  Var x = make_var(std::move(input), false);
  FrontendOutputs fe = frontend_graph(tape, model, r.grads, x, training);
  Var scores = backbone_graph(tape, model, r.grads, fe.tf);

  auto& gs = scores->grad_buffer();
  std::vector<double> losses(n);
  r.counts.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const Matrix& s = scores->value[b];
    const Vector& target = batch[b]->density;
    const auto frames = static_cast<double>(s.cols());
    if (s.cols() != target.size()) throw Error("forward_backward: density target length mismatch for " + batch[b]->id);
    if (model.config.head == HeadMode::density) {
      const Matrix diff = s - target.transpose();
      losses[b] = diff.squaredNorm() / frames;
      gs[b] = diff * (2.0 / frames * inv_n);
      r.counts[b] = s.sum();
    } else {
      const double mean = s.sum() / frames;
      const double count = model.head.weight * mean + model.head.bias;
      const double e = count - batch[b]->count;
      losses[b] = e * e;
      r.grads.head.weight += 2.0 * e * mean * inv_n;
      r.grads.head.bias += 2.0 * e * inv_n;
      gs[b].setConstant(2.0 * e * model.head.weight / frames * inv_n);
      r.counts[b] = count;
    }
  }
  r.loss = std::accumulate(losses.begin(), losses.end(), 0.0) * inv_n;
  if (!std::isfinite(r.loss)) {
    std::ostringstream os;
    os << "forward_backward: non-finite loss; per-clip losses:";
    for (std::size_t b = 0; b < n; ++b) os << ' ' << batch[b]->id << '=' << losses[b];
    throw Error(os.str());
  }
  tape.backward();
  if (!pack_parameters(r.grads).allFinite()) throw Error("forward_backward: non-finite gradient");
  r.bn_batch = std::move(fe.bn_batch);
  return r;
}

Vector parameter_scales(const Model& model, bool normalized_cutoffs) {
  Model s = model;
  visit_parameters(s, [](double& v, ParamKind) { v = 1.0; });
  if (normalized_cutoffs) {
    for (auto& level : s.tree.levels) {
      for (auto& node : level) {
        node.filter.f_low = model.tree.base_sample_rate;
        node.filter.f_high = model.tree.base_sample_rate;
      }
    }
    for (auto& layer : s.backbone.layers) layer.lowpass_cutoff.setConstant(layer.input_rate);
  }
  return pack_parameters(s);
}

void adam_step(Model& model, const Model& grads, AdamState& state, double lr, const TrainConfig& config) {
  Vector theta = pack_parameters(model);
  const Vector scale = parameter_scales(model, config.normalized_cutoffs);
  const Vector g = pack_parameters(grads).cwiseProduct(scale);
  if (state.m.size() == 0) {
    state.m = Vector::Zero(theta.size());
    state.v = Vector::Zero(theta.size());
  }
  if (state.m.size() != theta.size()) throw Error("adam_step: optimizer state does not match the model");
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * g;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const Vector update =
      (lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + config.epsilon)).matrix();
  theta -= update.cwiseProduct(scale);
  unpack_parameters(model, theta);
  clamp_model(model);
}

void update_running_stats(Model& model, std::span<const NodeStats> observed, double momentum) {
  for (const auto& o : observed) {
    auto& bn = model.tree.node(o.depth, o.index).bn;
    bn.mean = momentum * bn.mean + (1.0 - momentum) * o.stats.mean;
    bn.var = momentum * bn.var + (1.0 - momentum) * o.stats.var;
  }
}

EvalResult evaluate(const Model& model, std::span<const Example> examples) {
  EvalResult r;
  r.predicted.resize(examples.size());
  r.truth.resize(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    r.predicted[i] = predict(model, examples[i].clip).count;
    r.truth[i] = examples[i].count;
  });
  if (!examples.empty()) {
    r.mae = mae(r.truth, r.predicted);
    r.mse = mse(r.truth, r.predicted);
  }
  return r;
}

TrainState init_train_state(Model model) {
  TrainState s;
  s.best = model;
  s.model = std::move(model);
  return s;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

}  // namespace

Split split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = stream(seed, kSplitStream, 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  Split s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<std::size_t> epoch_order(std::size_t train_size, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(train_size);
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double train_step(TrainState& state, std::span<const Example* const> batch, const TrainConfig& config) {
  StepResult r = forward_backward(state.model, batch, true);
  adam_step(state.model, r.grads, state.adam, learning_rate_at(config, state.epoch), config);
  if (state.model.config.frontend.norm == NormMode::batchnorm)
    update_running_stats(state.model, r.bn_batch, config.bn_momentum);
  ++state.step;
  return r.loss;
}

TrainHistory train_loop(TrainState& state, std::span<const Example> examples, const Split& split,
                        const TrainConfig& config, const TrainHooks& hooks) {
  validate_train_config(config);
  if (split.train.empty()) throw Error("train_loop: no training examples");
  for (std::size_t i : split.train)
    if (i >= examples.size()) throw Error("train_loop: split index out of range");
  for (std::size_t i : split.val)
    if (i >= examples.size()) throw Error("train_loop: split index out of range");

  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<Example> v;
    v.reserve(idx.size());
    for (std::size_t i : idx) v.push_back(examples[i]);
    return v;
  };
  const std::vector<Example> train_set = gather(split.train);
  const std::vector<Example> val_set = gather(split.val);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches = (train_set.size() + batch_size - 1) / batch_size;

  TrainHistory history;
  auto run_eval = [&] {
    EvalRecord rec;
    rec.epoch = state.epoch;
    rec.step = state.step;
    rec.train_mae = evaluate(state.model, train_set).mae;
    double score = rec.train_mae;
    if (!val_set.empty()) {
      const EvalResult v = evaluate(state.model, val_set);
      rec.val_mae = v.mae;
      rec.val_mse = v.mse;
      score = v.mae;
    }
    if (score < state.best_score) {
      state.best_score = score;
      state.best = state.model;
    }
    history.evals.push_back(rec);
    if (hooks.on_eval) hooks.on_eval(rec, state);
  };
  // The step cap also triggers an evaluation so the run always ends with a scored model.
  auto stop_at_cap = [&] {
    if (config.max_steps <= 0 || state.step < config.max_steps) return false;
    if (history.evals.empty() || history.evals.back().step != state.step) run_eval();
    return true;
  };

  while (state.epoch < config.epochs) {
    const auto order = epoch_order(train_set.size(), config.seed, state.epoch);
    for (auto bi = static_cast<std::size_t>(state.batch_in_epoch); bi < batches; ++bi) {
      if (stop_at_cap()) return history;
      std::vector<const Example*> batch;
      for (std::size_t k = bi * batch_size; k < std::min(train_set.size(), (bi + 1) * batch_size); ++k)
        batch.push_back(&train_set[order[k]]);
      const double lr = learning_rate_at(config, state.epoch);
      const double loss = train_step(state, batch, config);
      state.batch_in_epoch = static_cast<int>(bi + 1);
      StepRecord rec{state.epoch, state.step, lr, loss};
      history.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
    }
    if ((state.epoch + 1) % config.eval_every == 0 || state.epoch + 1 == config.epochs) run_eval();
    ++state.epoch;
    state.batch_in_epoch = 0;
  }
  return history;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << "epoch,step,lr,loss\n";
  for (const auto& r : history.steps) os << r.epoch << ',' << r.step << ',' << fmt(r.lr) << ',' << fmt(r.loss) << '\n';
}

void write_eval_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << "epoch,step,train_mae,val_mae,val_mse\n";
  for (const auto& r : history.evals)
    os << r.epoch << ',' << r.step << ',' << fmt(r.train_mae) << ',' << fmt(r.val_mae) << ',' << fmt(r.val_mse) << '\n';
}

}  // namespace dydec
