#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "fingerdiff/model.hpp"
#include "fingerdiff/sampler.hpp"
#include "fingerdiff/schedule.hpp"
#include "fingerdiff/synth.hpp"

namespace fingerdiff {

// JSON names mirror the config structs' field names exactly; the config file
// holds one section per struct. CLI overrides ("section.key=value") are
// applied on top and unknown keys are rejected.

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct ToolConfig {
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  SynthConfig synth;
};

nlohmann::json tool_config_to_json(const ToolConfig& cfg);
ToolConfig tool_config_from_json(const nlohmann::json& j);

// Empty path: defaults + overrides only.
ToolConfig load_tool_config(const std::filesystem::path& path,
                            const std::vector<std::string>& overrides);

std::string config_hash(const ToolConfig& cfg);

}  // namespace fingerdiff
