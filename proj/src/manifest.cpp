#include "fingerdiff/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw DataError("unknown split '" + name + "' (expected train|val|test)");
}

std::vector<const VideoRecord*> Manifest::records_in(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

std::vector<std::string> Manifest::driver_ids_in(Split s) const {
  std::set<std::string> ids;
  for (const auto& r : records)
    if (r.split == s) ids.insert(r.driver_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> Manifest::generator_tags() const {
  std::set<std::string> tags;
  for (const auto& r : records) tags.insert(r.generator);
  return {tags.begin(), tags.end()};
}

const VideoRecord* Manifest::find_by_path(const std::string& video_path) const {
  for (const auto& r : records)
    if (r.video_path == video_path) return &r;
  return nullptr;
}

Manifest Manifest::filtered_by_generator(const std::string& tag) const {
  Manifest out;
  for (const auto& r : records)
    if (r.generator == tag) out.records.push_back(r);
  out.identity_split_map.clear();
  for (const auto& r : out.records) {
    out.identity_split_map[r.target_id] = r.split;
    out.identity_split_map[r.driver_id] = r.split;
  }
  return out;
}

void validate_manifest(Manifest& manifest, const std::filesystem::path& root, bool check_paths) {
  std::set<std::string> seen_paths;
  manifest.identity_split_map.clear();

  auto bind_identity = [&](const std::string& id, Split s, const std::string& role,
                           const VideoRecord& rec) {
    auto it = manifest.identity_split_map.find(id);
    if (it == manifest.identity_split_map.end()) {
      manifest.identity_split_map.emplace(id, s);
    } else if (it->second != s) {
      throw DataError("identity split leak: identity '" + id + "' (" + role + " of '" +
                      rec.video_path + "') appears in both '" + split_name(it->second) +
                      "' and '" + split_name(s) + "'");
    }
  };

  for (auto& rec : manifest.records) {
    if (rec.num_frames < 1)
      throw DataError("record '" + rec.video_path + "': num_frames must be >= 1");
    if (!(rec.fps > 0.0)) throw DataError("record '" + rec.video_path + "': fps must be > 0");
    if (!seen_paths.insert(rec.video_path).second)
      throw DataError("duplicate video_path '" + rec.video_path + "' in manifest");

    bind_identity(rec.target_id, rec.split, "target", rec);
    bind_identity(rec.driver_id, rec.split, "driver", rec);

    std::filesystem::path p(rec.video_path);
    rec.resolved_dir = p.is_absolute() ? p : root / p;
    if (check_paths && !std::filesystem::exists(rec.resolved_dir))
      throw DataError("video path missing on disk: '" + rec.resolved_dir.string() + "'");
  }
}

static const std::set<std::string> kManifestKeys = {
    "video_path", "target_id", "driver_id", "generator", "split", "num_frames", "fps"};

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");

  Manifest manifest;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest parse error at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (!row.is_object())
      throw DataError("manifest parse error at line " + std::to_string(line_no) +
                      ": expected one object per line");
    for (const auto& [key, _] : row.items())
      if (!kManifestKeys.count(key))
        throw DataError("manifest line " + std::to_string(line_no) + ": unknown key '" + key +
                        "'");
    for (const auto& key : kManifestKeys)
      if (!row.contains(key))
        throw DataError("manifest line " + std::to_string(line_no) + ": missing key '" + key +
                        "'");
    try {
      VideoRecord rec;
      rec.video_path = row.at("video_path").get<std::string>();
      rec.target_id = row.at("target_id").get<std::string>();
      rec.driver_id = row.at("driver_id").get<std::string>();
      rec.generator = row.at("generator").get<std::string>();
      rec.split = split_from_name(row.at("split").get<std::string>());
      rec.num_frames = row.at("num_frames").get<std::int64_t>();
      rec.fps = row.at("fps").get<double>();
      manifest.records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": bad field: " + e.what());
    }
  }

  validate_manifest(manifest, path.parent_path());
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  for (const auto& rec : manifest.records) {
    json row;
    row["video_path"] = rec.video_path;
    row["target_id"] = rec.target_id;
    row["driver_id"] = rec.driver_id;
    row["generator"] = rec.generator;
    row["split"] = split_name(rec.split);
    row["num_frames"] = rec.num_frames;
    row["fps"] = rec.fps;
    out << row.dump() << "\n";
  }
  if (!out) throw IoError("short write to manifest '" + path.string() + "'");
}

}  // namespace fingerdiff
