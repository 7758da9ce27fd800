#pragma once

#include <cstdint>

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

struct TrainConfig {
  int n_identities_per_batch = 16;  // N
  int clips_per_identity = 8;      // M; batch size is N*M
  int epochs = 150;
  int steps_per_epoch = 200;
  double base_lr = 1e-3;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  double grad_clip_norm = 1.0;
  bool mixed_precision = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_identities_per_batch < 1 || clips_per_identity < 1)
      throw ConfigError("train: batch factors must be >= 1");
    if (static_cast<std::int64_t>(n_identities_per_batch) * clips_per_identity < 2)
      throw ConfigError("train: batch size N*M must be >= 2");
    if (epochs < 1 || steps_per_epoch < 1)
      throw ConfigError("train: epochs and steps_per_epoch must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
      throw ConfigError("train: warmup_epochs must satisfy 0 <= warmup < epochs");
    if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (grad_clip_norm <= 0.0) throw ConfigError("train: grad_clip_norm must be > 0");
  }
};

// Linear warmup 0 -> base_lr over warmup_epochs * steps_per_epoch steps, then
// cosine decay base_lr -> 0 over the rest. Continuous at the boundary.
double lr_at(std::int64_t global_step, const TrainConfig& cfg);

}  // namespace fingerdiff
