#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fingerdiff {

enum class Split { train, val, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct VideoRecord {
  std::string video_path;  // as stored in the manifest; may be relative to the manifest dir
  std::string target_id;
  std::string driver_id;
  std::string generator;
  Split split = Split::train;
  std::int64_t num_frames = 0;
  double fps = 0.0;

  // Filled on load/generation; not serialized.
  std::filesystem::path resolved_dir;

  // Reenactment kind is derived, never stored.
  bool is_self_reenactment() const { return target_id == driver_id; }
};

struct Manifest {
  std::vector<VideoRecord> records;
  std::map<std::string, Split> identity_split_map;

  std::vector<const VideoRecord*> records_in(Split s) const;
  std::vector<std::string> driver_ids_in(Split s) const;  // sorted, distinct
  std::vector<std::string> generator_tags() const;        // sorted, distinct
  const VideoRecord* find_by_path(const std::string& video_path) const;

  // Keeps only records whose generator tag matches; identity map is rebuilt.
  Manifest filtered_by_generator(const std::string& tag) const;
};

// Validates every invariant (identity-disjoint splits, unique paths, field
// ranges, resolvable paths) and fills identity_split_map + resolved_dir.
// `root` is the directory relative video paths resolve against.
// check_paths=false skips the on-disk existence check (used by unit tests
// that only exercise the split/uniqueness logic).
void validate_manifest(Manifest& manifest, const std::filesystem::path& root,
                       bool check_paths = true);

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace fingerdiff
