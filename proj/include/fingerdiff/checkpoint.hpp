#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "fingerdiff/config.hpp"
#include "fingerdiff/model.hpp"
#include "fingerdiff/version.hpp"

namespace fingerdiff {

struct CheckpointMeta {
  int schema_version = kCheckpointSchemaVersion;
  ModelConfig model_config;
  int epoch = 0;
  std::uint64_t rng_seed = 0;
  std::int64_t global_step = 0;
  std::string manifest_hash;
};

// A checkpoint is <base>.fdt (binary tensor archive: params + running stats)
// plus <base>.json (schema_version, ModelConfig, epoch, rng_state,
// manifest_hash).
namespace detail {

inline constexpr char kTensorMagic[8] = {'F', 'D', 'C', 'K', '0', '0', '0', '1'};

template <typename T>
void write_tensor(std::ofstream& out, const std::string& name, const Tensor<T>& t) {
  const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
  out.write(name.data(), name_len);
  const std::uint8_t dtype = sizeof(T);
  out.write(reinterpret_cast<const char*>(&dtype), 1);
  const std::uint32_t ndim = static_cast<std::uint32_t>(t.shape.size());
  out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
  for (auto d : t.shape) out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  out.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
}

template <typename T>
std::map<std::string, Tensor<T>> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kTensorMagic))
    throw IoError("bad checkpoint magic in '" + path.string() + "'");
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));

  std::map<std::string, Tensor<T>> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint8_t dtype = 0;
    in.read(reinterpret_cast<char*>(&dtype), 1);
    if (dtype != sizeof(T))
      throw IoError("checkpoint '" + path.string() + "': tensor '" + name +
                    "' has element size " + std::to_string(dtype) + ", expected " +
                    std::to_string(sizeof(T)));
    std::uint32_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), sizeof(d));
    Tensor<T> t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
    if (!in) throw IoError("truncated checkpoint '" + path.string() + "'");
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

}  // namespace detail

template <typename T>
void save_checkpoint(F5CModel<T>& model, const std::filesystem::path& base,
                     const CheckpointMeta& meta) {
  std::filesystem::create_directories(base.parent_path());
  const auto tensor_path = std::filesystem::path(base.string() + ".fdt");
  std::ofstream out(tensor_path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + tensor_path.string() + "'");
  out.write(detail::kTensorMagic, 8);

  std::uint64_t count = 0;
  model.for_each_param([&](const std::string&, Tensor<T>&) { ++count; });
  model.for_each_buffer([&](const std::string&, Tensor<T>&) { ++count; });
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  model.for_each_param(
      [&](const std::string& name, Tensor<T>& t) { detail::write_tensor(out, name, t); });
  model.for_each_buffer(
      [&](const std::string& name, Tensor<T>& t) { detail::write_tensor(out, name, t); });
  if (!out) throw IoError("short write to checkpoint '" + tensor_path.string() + "'");
  out.close();

  nlohmann::json sidecar;
  sidecar["schema_version"] = meta.schema_version;
  sidecar["model_config"] = meta.model_config;
  sidecar["epoch"] = meta.epoch;
  sidecar["rng_state"] = {{"seed", meta.rng_seed}, {"global_step", meta.global_step}};
  sidecar["manifest_hash"] = meta.manifest_hash;
  sidecar["tool_version"] = kToolVersion;
  std::ofstream js(base.string() + ".json");
  js << sidecar.dump(2) << "\n";
  if (!js) throw IoError("cannot write checkpoint sidecar for '" + base.string() + "'");
}

template <typename T>
F5CModel<T> load_checkpoint(const std::filesystem::path& base, CheckpointMeta* out_meta = nullptr) {
  std::ifstream js(base.string() + ".json");
  if (!js) throw IoError("cannot open checkpoint sidecar '" + base.string() + ".json'");
  nlohmann::json sidecar;
  try {
    js >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint sidecar '" + base.string() + ".json': " + e.what());
  }

  CheckpointMeta meta;
  meta.schema_version = sidecar.at("schema_version").get<int>();
  if (meta.schema_version != kCheckpointSchemaVersion)
    throw IoError("checkpoint schema_version " + std::to_string(meta.schema_version) +
                  " unsupported (tool expects " + std::to_string(kCheckpointSchemaVersion) +
                  ")");
  meta.model_config = sidecar.at("model_config").get<ModelConfig>();
  meta.epoch = sidecar.at("epoch").get<int>();
  meta.rng_seed = sidecar.at("rng_state").at("seed").get<std::uint64_t>();
  meta.global_step = sidecar.at("rng_state").at("global_step").get<std::int64_t>();
  meta.manifest_hash = sidecar.value("manifest_hash", "");

  F5CModel<T> model(meta.model_config, /*seed=*/0);
  auto tensors = detail::read_tensors<T>(base.string() + ".fdt");
  auto restore = [&](const std::string& name, Tensor<T>& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw IoError("checkpoint missing tensor '" + name + "' (config mismatch?)");
    if (it->second.shape != dst.shape)
      throw IoError("checkpoint tensor '" + name + "' has mismatched shape");
    dst = std::move(it->second);
  };
  model.for_each_param(restore);
  model.for_each_buffer(restore);

  if (out_meta) *out_meta = meta;
  return model;
}

}  // namespace fingerdiff
