#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fingerdiff/frames.hpp"
#include "fingerdiff/manifest.hpp"
#include "fingerdiff/rng.hpp"

namespace fdtest {

namespace fs = std::filesystem;

inline fs::path make_temp_dir(const std::string& hint) {
  static int counter = 0;
  const auto stamp =
      std::chrono::steady_clock::now().time_since_epoch().count() + 1000 * counter++;
  fs::path p = fs::temp_directory_path() / ("fingerdiff_" + hint + "_" + std::to_string(stamp));
  fs::create_directories(p);
  return p;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& hint) : path(make_temp_dir(hint)) {}
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// Constant-value grayscale video: frame i is filled with pixel value i (mod 256).
inline void write_constant_video(const fs::path& dir, int num_frames, int size = 128) {
  fs::create_directories(dir);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < num_frames; ++i) {
    std::fill(px.begin(), px.end(), static_cast<std::uint8_t>(i % 256));
    char name[32];
    std::snprintf(name, sizeof(name), "f_%06d.pgm", i);
    fingerdiff::write_pgm(dir / name, px.data(), size, size);
  }
}

inline fingerdiff::VideoRecord make_record(const fs::path& dir, int num_frames,
                                           const std::string& target = "idA",
                                           const std::string& driver = "idA") {
  fingerdiff::VideoRecord rec;
  rec.video_path = dir.string();
  rec.target_id = target;
  rec.driver_id = driver;
  rec.generator = "styleA";
  rec.split = fingerdiff::Split::train;
  rec.num_frames = num_frames;
  rec.fps = 25.0;
  rec.resolved_dir = dir;
  return rec;
}

// Order-independent content hash of a directory tree.
inline std::uint64_t hash_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& f : files) {
    mix(fs::relative(f, root).string());
    std::ifstream in(f, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    mix(content);
  }
  return h;
}

}  // namespace fdtest
