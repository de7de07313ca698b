#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dydec/graph.hpp"
#include "dydec/model.hpp"

namespace dydec {

struct TrainConfig {
  double learning_rate = 1e-3;
  double decay_factor = 0.5;
  int decay_every = 20;  ///< epochs
  int epochs = 60;
  int batch_size = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int eval_every = 1;  ///< epochs
  long max_steps = 0;  ///< 0: no step cap
  double bn_momentum = 0.9;
  /// Run Adam on cutoffs expressed as a fraction of their sample rate instead of raw Hz.
  bool normalized_cutoffs = true;
};

void validate_train_config(const TrainConfig& config);
/// lr * decay^(floor(epoch / decay_every)), epochs counted from 0.
double learning_rate_at(const TrainConfig& config, int epoch);

/// One training clip with targets precomputed for a given model's frame count.
struct Example {
  std::string id;
  AudioClip clip;
  std::vector<EventLabel> events;
  Vector density;
  double count = 0.0;
};

Example make_example(std::string id, AudioClip clip, std::vector<EventLabel> events, const Model& model);
/// Reads <dir>/labels.jsonl and <dir>/clips/<clip_id>.wav.
std::vector<Example> load_dataset(const std::filesystem::path& dir, const Model& model);

struct StepResult {
  double loss = 0.0;
  Model grads;
  std::vector<double> counts;  ///< predicted count per batch item
  std::vector<NodeStats> bn_batch;
};

/// Mean per-clip loss and the gradient of every trainable parameter.
StepResult forward_backward(const Model& model, std::span<const Example* const> batch, bool training = true);

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

/// Per-parameter factor mapping the optimizer's coordinates to stored units.
Vector parameter_scales(const Model& model, bool normalized_cutoffs);

/// Standard bias-corrected Adam followed by clamp_model.
void adam_step(Model& model, const Model& grads, AdamState& state, double lr, const TrainConfig& config);

/// Moves running batch-norm statistics towards the observed batch statistics.
void update_running_stats(Model& model, std::span<const NodeStats> observed, double momentum);

struct EvalResult {
  std::vector<double> predicted;
  std::vector<double> truth;
  double mae = 0.0;
  double mse = 0.0;  ///< root mean squared count error
};
EvalResult evaluate(const Model& model, std::span<const Example> examples);

struct StepRecord {
  int epoch = 0;
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EvalRecord {
  int epoch = 0;
  long step = 0;
  double train_mae = 0.0;
  double val_mae = std::numeric_limits<double>::quiet_NaN();
  double val_mse = std::numeric_limits<double>::quiet_NaN();
};

/// Everything needed to continue training bit-identically.
struct TrainState {
  Model model;
  AdamState adam;
  int epoch = 0;           ///< epoch in progress
  int batch_in_epoch = 0;  ///< batches of `epoch` already consumed
  long step = 0;
  double best_score = std::numeric_limits<double>::infinity();
  Model best;
};

TrainState init_train_state(Model model);

/// Deterministic train/validation split of example indices.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_dataset(std::size_t n, double val_fraction, std::uint64_t seed);

/// Training order of `train_size` items for one epoch.
std::vector<std::size_t> epoch_order(std::size_t train_size, std::uint64_t seed, int epoch);

/// Runs one optimizer step on the given batch; returns the batch loss.
double train_step(TrainState& state, std::span<const Example* const> batch, const TrainConfig& config);

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EvalRecord&, const TrainState&)> on_eval;
};

/// Epochs of seeded shuffled batches, periodic evaluation and best-model retention (by validation
/// MAE, or training MAE when the split has no validation items). Resumes from `state`.
TrainHistory train_loop(TrainState& state, std::span<const Example> examples, const Split& split,
                        const TrainConfig& config, const TrainHooks& hooks = {});

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);
void write_eval_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace dydec
