#include "fingerdiff/schedule.hpp"

#include <cmath>
#include <string>

namespace fingerdiff {

double lr_at(std::int64_t global_step, const TrainConfig& cfg) {
  const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * cfg.steps_per_epoch;
  if (global_step < 0 || global_step >= total)
    throw ConfigError("lr_at: step " + std::to_string(global_step) + " outside [0, " +
                      std::to_string(total) + ")");
  const std::int64_t warmup = static_cast<std::int64_t>(cfg.warmup_epochs) * cfg.steps_per_epoch;
  if (global_step < warmup)
    return cfg.base_lr * static_cast<double>(global_step) / static_cast<double>(warmup);
  const double u = static_cast<double>(global_step - warmup) /
                   static_cast<double>(total - warmup);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * u));
}

}  // namespace fingerdiff
