#include "fingerdiff/sampler.hpp"

#include "fingerdiff/errors.hpp"
#include "fingerdiff/frames.hpp"

namespace fingerdiff {

std::int64_t sample_start(std::int64_t num_frames, const SamplerConfig& cfg, Rng* rng) {
  if (num_frames < 1) throw DataError("sample_start: num_frames must be >= 1");
  const std::int64_t slack = std::max<std::int64_t>(0, num_frames - cfg.clip_length);
  if (cfg.mode == SampleMode::eval_center) return slack / 2;
  if (rng == nullptr) throw ConfigError("train_random sampling needs an rng");
  return static_cast<std::int64_t>(rng->below(static_cast<std::uint64_t>(slack + 1)));
}

Tensor<float> make_clip(const VideoRecord& record, const SamplerConfig& cfg, Rng* rng) {
  const std::int64_t start = sample_start(record.num_frames, cfg, rng);
  return read_clip_frames(record, start, cfg.clip_length);
}

}  // namespace fingerdiff
