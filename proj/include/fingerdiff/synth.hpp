#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fingerdiff/manifest.hpp"

namespace fingerdiff {

// Desk-scale procedural stand-in for a reenactment corpus: target appearance
// and driver motion are controlled independently, so every (target, driver)
// pair can be rendered as a self- or cross-reenactment.
struct SynthConfig {
  int n_identities = 4;
  int videos_per_pair = 1;
  // Applied to val/test splits; 0 means "same as videos_per_pair". Eval needs
  // more videos per pair than training for a usable pair count.
  int videos_per_pair_eval = 0;
  std::array<int, 2> frame_count_range{48, 64};
  int frame_size = 128;
  std::uint64_t motion_seed = 0;
  std::vector<std::string> style_tags{"styleA"};
  // Identities per split, in order (train, val, test). All zero: everyone
  // trains. Otherwise must sum to n_identities.
  std::array<int, 3> split_counts{0, 0, 0};
  double fps = 25.0;
};

using ParamMap = std::map<std::string, double>;

// Per-driver motion program. Identity lives in the temporal structure
// (frequencies, blink cadence, left/right asymmetry), not in instantaneous
// amplitudes, which share one range across drivers.
ParamMap synth_motion_params(std::uint64_t motion_seed, const std::string& driver_id);
ParamMap synth_appearance_params(std::uint64_t motion_seed, const std::string& target_id);

// Renders one frame (frame_size x frame_size, [0,1] floats) of `target`'s
// appearance animated by `driver`'s motion program. `phase` holds the
// per-video oscillator offsets.
void synth_render_frame(const ParamMap& appearance, const ParamMap& motion,
                        const ParamMap& phase, const std::string& style_tag, int frame_index,
                        int frame_size, std::vector<float>& out);

ParamMap synth_video_phases(std::uint64_t video_seed);

// Renders all videos + sidecar metadata + manifest.jsonl under out_dir.
// Pure function of cfg: reruns are byte-identical.
Manifest generate_synthetic_dataset(const SynthConfig& cfg,
                                    const std::filesystem::path& out_dir);

}  // namespace fingerdiff
