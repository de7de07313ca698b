#pragma once

#include <filesystem>

#include "dydec/config.hpp"
#include "dydec/model.hpp"
#include "dydec/train.hpp"

namespace dydec {

/// Training snapshot. The shuffle/split streams are pure functions of (train.seed, epoch,
/// batch_in_epoch), so the cursor in `state` is the complete RNG state.
struct Checkpoint {
  TrainConfig train;
  TrainState state;
  Json extra = Json::object();  ///< free-form provenance (dataset config, CLI flags)
};

/// Binary container "DYDECKPT" plus a human-readable `<path>.json` sidecar.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The retained best model if one exists, otherwise the current one.
Model load_model(const std::filesystem::path& path);

/// A checkpoint holding only `model` (fresh optimizer state).
Checkpoint checkpoint_for_model(const Model& model, const TrainConfig& train = {});

}  // namespace dydec
