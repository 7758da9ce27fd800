#pragma once

#include <filesystem>
#include <vector>

#include "fingerdiff/manifest.hpp"
#include "fingerdiff/model.hpp"
#include "fingerdiff/sampler.hpp"
#include "fingerdiff/schedule.hpp"

namespace fingerdiff {

std::string manifest_hash(const Manifest& manifest);

struct TrainResult {
  std::filesystem::path final_checkpoint;  // checkpoint base path (no extension)
  std::filesystem::path best_checkpoint;
  double best_val_auc = -1.0;  // -1 when the manifest has no evaluable val split
  std::vector<double> loss_history;
  std::filesystem::path metrics_path;
};

// Full training loop: identity-balanced batches, SupCon objective, AdamW with
// warmup+cosine schedule and global-norm clipping, per-epoch checkpoints and
// validation AUC for best-checkpoint selection. Deterministic for a fixed
// seed in full precision.
TrainResult train_model(const Manifest& manifest, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const SamplerConfig& sampler_cfg,
                        const std::filesystem::path& out_dir);

}  // namespace fingerdiff
