#pragma once

#include <string>
#include <vector>

#include "fingerdiff/manifest.hpp"
#include "fingerdiff/rng.hpp"
#include "fingerdiff/schedule.hpp"

namespace fingerdiff {

struct BatchItem {
  const VideoRecord* record;
  std::string driver_label;
};

// Identity-balanced batch: N distinct driver identities drawn uniformly
// without replacement from the train split, M videos driven by each (with
// replacement only when a driver has fewer than M videos). Deterministic
// given the rng state.
std::vector<BatchItem> sample_batch(const Manifest& manifest, const TrainConfig& cfg,
                                    Rng& rng);

}  // namespace fingerdiff
