#include "fingerdiff/config.hpp"

#include <fstream>

#include "fingerdiff/errors.hpp"
#include "fingerdiff/rng.hpp"

namespace fingerdiff {

using nlohmann::json;

void to_json(json& j, const ModelConfig& c) {
  j = json{{"condition", condition_name(c.condition)},
           {"clip_length", c.clip_length},
           {"ccc_k", c.ccc_k},
           {"dropout", c.dropout},
           {"embed_dim", c.embed_dim},
           {"convstack_channels", c.convstack_channels}};
}

void from_json(const json& j, ModelConfig& c) {
  c.condition = condition_from_name(j.at("condition").get<std::string>());
  j.at("clip_length").get_to(c.clip_length);
  j.at("ccc_k").get_to(c.ccc_k);
  j.at("dropout").get_to(c.dropout);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("convstack_channels").get_to(c.convstack_channels);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"n_identities_per_batch", c.n_identities_per_batch},
           {"clips_per_identity", c.clips_per_identity},
           {"epochs", c.epochs},
           {"steps_per_epoch", c.steps_per_epoch},
           {"base_lr", c.base_lr},
           {"weight_decay", c.weight_decay},
           {"warmup_epochs", c.warmup_epochs},
           {"grad_clip_norm", c.grad_clip_norm},
           {"mixed_precision", c.mixed_precision},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("n_identities_per_batch").get_to(c.n_identities_per_batch);
  j.at("clips_per_identity").get_to(c.clips_per_identity);
  j.at("epochs").get_to(c.epochs);
  j.at("steps_per_epoch").get_to(c.steps_per_epoch);
  j.at("base_lr").get_to(c.base_lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("warmup_epochs").get_to(c.warmup_epochs);
  j.at("grad_clip_norm").get_to(c.grad_clip_norm);
  j.at("mixed_precision").get_to(c.mixed_precision);
  j.at("seed").get_to(c.seed);
}

void to_json(json& j, const SamplerConfig& c) {
  j = json{{"clip_length", c.clip_length},
           {"mode", c.mode == SampleMode::train_random ? "train_random" : "eval_center"},
           {"rng_seed", c.rng_seed}};
}

void from_json(const json& j, SamplerConfig& c) {
  j.at("clip_length").get_to(c.clip_length);
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "train_random")
    c.mode = SampleMode::train_random;
  else if (mode == "eval_center")
    c.mode = SampleMode::eval_center;
  else
    throw ConfigError("sampler: unknown mode '" + mode + "'");
  j.at("rng_seed").get_to(c.rng_seed);
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"n_identities", c.n_identities},
           {"videos_per_pair", c.videos_per_pair},
           {"videos_per_pair_eval", c.videos_per_pair_eval},
           {"frame_count_range", c.frame_count_range},
           {"frame_size", c.frame_size},
           {"motion_seed", c.motion_seed},
           {"style_tags", c.style_tags},
           {"split_counts", c.split_counts},
           {"fps", c.fps}};
}

void from_json(const json& j, SynthConfig& c) {
  j.at("n_identities").get_to(c.n_identities);
  j.at("videos_per_pair").get_to(c.videos_per_pair);
  j.at("videos_per_pair_eval").get_to(c.videos_per_pair_eval);
  j.at("frame_count_range").get_to(c.frame_count_range);
  j.at("frame_size").get_to(c.frame_size);
  j.at("motion_seed").get_to(c.motion_seed);
  j.at("style_tags").get_to(c.style_tags);
  j.at("split_counts").get_to(c.split_counts);
  j.at("fps").get_to(c.fps);
}

nlohmann::json tool_config_to_json(const ToolConfig& cfg) {
  return json{{"model", cfg.model},
              {"train", cfg.train},
              {"sampler", cfg.sampler},
              {"synth", cfg.synth}};
}

ToolConfig tool_config_from_json(const json& j) {
  ToolConfig cfg;
  try {
    j.at("model").get_to(cfg.model);
    j.at("train").get_to(cfg.train);
    j.at("sampler").get_to(cfg.sampler);
    j.at("synth").get_to(cfg.synth);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

namespace {

// Every key present in `input` must exist in `reference` (recursively).
void check_known_keys(const json& input, const json& reference, const std::string& prefix) {
  if (!input.is_object()) return;
  for (const auto& [key, value] : input.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.is_object() || !reference.contains(key))
      throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object()) check_known_keys(value, reference.at(key), path);
  }
}

void deep_merge(json& base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base.at(key).is_object())
      deep_merge(base.at(key), value);
    else
      base[key] = value;
  }
}

}  // namespace

ToolConfig load_tool_config(const std::filesystem::path& path,
                            const std::vector<std::string>& overrides) {
  json merged = tool_config_to_json(ToolConfig{});  // defaults

  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json file_cfg;
    try {
      in >> file_cfg;
    } catch (const json::exception& e) {
      throw ConfigError("config parse error in '" + path.string() + "': " + e.what());
    }
    check_known_keys(file_cfg, merged, "");
    deep_merge(merged, file_cfg);
  }

  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form section.key=value");
    const std::string key_path = ov.substr(0, eq);
    const std::string value_str = ov.substr(eq + 1);

    json* node = &merged;
    std::size_t start = 0;
    std::string walked;
    for (;;) {
      const auto dot = key_path.find('.', start);
      const std::string part = key_path.substr(start, dot - start);
      walked = walked.empty() ? part : walked + "." + part;
      if (!node->is_object() || !node->contains(part))
        throw ConfigError("unknown config key '" + walked + "' in override '" + ov + "'");
      node = &node->at(part);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json parsed = json::parse(value_str, nullptr, false);
    if (parsed.is_discarded()) parsed = value_str;  // bare strings allowed
    *node = parsed;
  }

  return tool_config_from_json(merged);
}

std::string config_hash(const ToolConfig& cfg) {
  const std::string dump = tool_config_to_json(cfg).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump)));
  return buf;
}

}  // namespace fingerdiff
