#pragma once

#include <cstdint>

#include "fingerdiff/manifest.hpp"
#include "fingerdiff/rng.hpp"
#include "fingerdiff/tensor.hpp"

namespace fingerdiff {

enum class SampleMode { train_random, eval_center };

struct SamplerConfig {
  std::int64_t clip_length = 64;  // ablations use {16, 32, 64, 128}
  SampleMode mode = SampleMode::eval_center;
  std::uint64_t rng_seed = 0;
};

// Start index of a T-frame clip in an N-frame video.
//   train_random: uniform over the integer range [0, max(0, N-T)]
//   eval_center:  floor((N-T)/2), clamped to >= 0
std::int64_t sample_start(std::int64_t num_frames, const SamplerConfig& cfg, Rng* rng);

// Exactly T consecutive frames (stride 1); videos shorter than T are padded
// by repeating the final frame.
Tensor<float> make_clip(const VideoRecord& record, const SamplerConfig& cfg, Rng* rng);

}  // namespace fingerdiff
