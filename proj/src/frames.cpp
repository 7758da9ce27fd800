#include "fingerdiff/frames.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

namespace {

// Skips whitespace and '#' comments between PNM header tokens.
int next_pnm_int(std::istream& in, const std::filesystem::path& path) {
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw DataError("truncated PNM header in '" + path.string() + "'");
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  in >> value;
  if (!in) throw DataError("bad PNM header in '" + path.string() + "'");
  return value;
}

}  // namespace

RawImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frame '" + path.string() + "'");

  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw DataError("unsupported frame format in '" + path.string() +
                    "' (expected binary PGM P5 or PPM P6)");

  RawImage img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = next_pnm_int(in, path);
  img.height = next_pnm_int(in, path);
  const int maxval = next_pnm_int(in, path);
  if (img.width <= 0 || img.height <= 0)
    throw DataError("bad dimensions in '" + path.string() + "'");
  if (maxval != 255)
    throw DataError("unsupported maxval " + std::to_string(maxval) + " in '" + path.string() +
                    "' (only 8-bit supported)");
  in.get();  // single whitespace after maxval

  const std::size_t n =
      static_cast<std::size_t>(img.width) * img.height * static_cast<std::size_t>(img.channels);
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw DataError("truncated pixel data in '" + path.string() + "'");
  return img;
}

void write_pgm(const std::filesystem::path& path, const std::uint8_t* pixels, int width,
               int height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write frame '" + path.string() + "'");
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels),
            static_cast<std::streamsize>(width) * height);
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

void image_to_luma_frame(const RawImage& img, float* out) {
  // BT.601 luma in [0,1] at source resolution.
  std::vector<float> luma(static_cast<std::size_t>(img.width) * img.height);
  if (img.channels == 1) {
    for (std::size_t i = 0; i < luma.size(); ++i) luma[i] = img.pixels[i] * (1.0f / 255.0f);
  } else {
    for (std::size_t i = 0; i < luma.size(); ++i) {
      const float r = img.pixels[3 * i + 0];
      const float g = img.pixels[3 * i + 1];
      const float b = img.pixels[3 * i + 2];
      luma[i] = (0.299f * r + 0.587f * g + 0.114f * b) * (1.0f / 255.0f);
    }
  }

  if (img.width == kClipSize && img.height == kClipSize) {
    std::copy(luma.begin(), luma.end(), out);
    return;
  }

  // Bilinear, pixel-center aligned.
  const float sx = static_cast<float>(img.width) / kClipSize;
  const float sy = static_cast<float>(img.height) / kClipSize;
  for (int y = 0; y < kClipSize; ++y) {
    float fy = (y + 0.5f) * sy - 0.5f;
    fy = std::clamp(fy, 0.0f, static_cast<float>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = fy - y0;
    for (int x = 0; x < kClipSize; ++x) {
      float fx = (x + 0.5f) * sx - 0.5f;
      fx = std::clamp(fx, 0.0f, static_cast<float>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = fx - x0;
      const float top = luma[static_cast<std::size_t>(y0) * img.width + x0] * (1.0f - wx) +
                        luma[static_cast<std::size_t>(y0) * img.width + x1] * wx;
      const float bot = luma[static_cast<std::size_t>(y1) * img.width + x0] * (1.0f - wx) +
                        luma[static_cast<std::size_t>(y1) * img.width + x1] * wx;
      out[static_cast<std::size_t>(y) * kClipSize + x] = top * (1.0f - wy) + bot * wy;
    }
  }
}

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& video_dir) {
  if (!std::filesystem::is_directory(video_dir))
    throw DataError("video path is not a directory of frames: '" + video_dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(video_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Tensor<float> read_clip_frames(const VideoRecord& record, std::int64_t start,
                               std::int64_t length) {
  if (start < 0 || start >= record.num_frames)
    throw DataError("clip start " + std::to_string(start) + " out of range [0, " +
                    std::to_string(record.num_frames) + ") for '" + record.video_path + "'");
  if (length < 1) throw DataError("clip length must be >= 1");

  const auto files = list_frame_files(record.resolved_dir);
  if (static_cast<std::int64_t>(files.size()) < record.num_frames)
    throw DataError("video '" + record.video_path + "' lists " +
                    std::to_string(record.num_frames) + " frames but only " +
                    std::to_string(files.size()) + " frame files exist");

  Tensor<float> clip({length, 1, kClipSize, kClipSize});
  const std::int64_t frame_px = kClipSize * kClipSize;
  std::int64_t last_loaded = -1;
  for (std::int64_t i = 0; i < length; ++i) {
    // Indices past the end repeat the final frame.
    const std::int64_t frame_idx = std::min(start + i, record.num_frames - 1);
    float* dst = clip.ptr() + i * frame_px;
    if (frame_idx == last_loaded) {
      std::copy(dst - frame_px, dst, dst);
      continue;
    }
    const RawImage img = read_pnm(files[static_cast<std::size_t>(frame_idx)]);
    image_to_luma_frame(img, dst);
    last_loaded = frame_idx;
  }
  return clip;
}

}  // namespace fingerdiff
