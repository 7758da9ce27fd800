#include "fingerdiff/batch_sampler.hpp"

#include <map>

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

std::vector<BatchItem> sample_batch(const Manifest& manifest, const TrainConfig& cfg,
                                    Rng& rng) {
  // Driver -> videos driven by that identity, in manifest order.
  std::map<std::string, std::vector<const VideoRecord*>> by_driver;
  for (const auto& rec : manifest.records)
    if (rec.split == Split::train) by_driver[rec.driver_id].push_back(&rec);

  const std::size_t n = static_cast<std::size_t>(cfg.n_identities_per_batch);
  if (by_driver.size() < n)
    throw DataError("sample_batch: need " + std::to_string(n) +
                    " distinct train drivers, found " + std::to_string(by_driver.size()));

  std::vector<std::string> drivers;
  drivers.reserve(by_driver.size());
  for (const auto& [id, _] : by_driver) drivers.push_back(id);

  // Partial Fisher-Yates for the N distinct drivers.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(drivers.size() - i));
    std::swap(drivers[i], drivers[j]);
  }

  std::vector<BatchItem> batch;
  batch.reserve(n * static_cast<std::size_t>(cfg.clips_per_identity));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& videos = by_driver[drivers[i]];
    const std::size_t m = static_cast<std::size_t>(cfg.clips_per_identity);
    if (videos.size() >= m) {
      std::vector<const VideoRecord*> pool = videos;
      for (std::size_t s = 0; s < m; ++s) {
        const std::size_t j = s + static_cast<std::size_t>(rng.below(pool.size() - s));
        std::swap(pool[s], pool[j]);
        batch.push_back({pool[s], drivers[i]});
      }
    } else {
      // Fewer videos than slots: sample with replacement.
      for (std::size_t s = 0; s < m; ++s)
        batch.push_back({videos[static_cast<std::size_t>(rng.below(videos.size()))],
                         drivers[i]});
    }
  }
  return batch;
}

}  // namespace fingerdiff
