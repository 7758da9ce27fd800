#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fingerdiff/manifest.hpp"
#include "fingerdiff/tensor.hpp"

namespace fingerdiff {

// Clips are always length x 1 x 128 x 128, values in [0, 1].
inline constexpr int kClipSize = 128;

struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (PGM) or 3 (PPM)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

// Binary PGM (P5) / PPM (P6), 8-bit only.
RawImage read_pnm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const std::uint8_t* pixels, int width,
               int height);

// Luma via BT.601 weights, then bilinear resize to kClipSize, scaled to [0,1].
void image_to_luma_frame(const RawImage& img, float* out /* kClipSize*kClipSize */);

// Sorted frame files of a video directory (.pgm/.ppm).
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& video_dir);

// `length` consecutive frames starting at `start`; indices past num_frames-1
// repeat the final frame. Requires 0 <= start < record.num_frames.
Tensor<float> read_clip_frames(const VideoRecord& record, std::int64_t start,
                               std::int64_t length);

}  // namespace fingerdiff
