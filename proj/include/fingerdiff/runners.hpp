#pragma once

#include <filesystem>

#include "fingerdiff/eval.hpp"
#include "fingerdiff/trainer.hpp"

namespace fingerdiff {

// Trains one model per generator tag (on that tag's train split) and
// evaluates it on every tag's test split. Rows follow `tags` order for both
// axes; work products land under work_dir/<tag>/.
CrossGenResult cross_generator_matrix(const Manifest& manifest, const ModelConfig& model_cfg,
                                      const TrainConfig& train_cfg,
                                      const SamplerConfig& sampler_cfg,
                                      const std::filesystem::path& work_dir);

enum class AblationAxis { condition, clip_length };

// Trains/evaluates one setting per value with everything else fixed.
// Defaults: conditions {feat_diff, pixel_diff, raw_feat, static}; clip
// lengths {16, 32, 64, 128}.
std::vector<AblationRow> run_ablation(const Manifest& manifest, const ModelConfig& model_cfg,
                                      const TrainConfig& train_cfg,
                                      const SamplerConfig& sampler_cfg, AblationAxis axis,
                                      std::vector<std::string> values,
                                      const std::filesystem::path& work_dir);

}  // namespace fingerdiff
