#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fingerdiff/manifest.hpp"
#include "fingerdiff/model.hpp"
#include "fingerdiff/sampler.hpp"
#include "fingerdiff/version.hpp"

namespace fingerdiff {

// Mann-Whitney AUC: fraction of (pos, neg) pairs with pos > neg, ties 0.5.
// Computed via average ranks; tests compare against direct pair counting.
double auc(const std::vector<double>& pos, const std::vector<double>& neg);

struct PairSpec {
  std::size_t a = 0, b = 0;  // indices into the record universe passed to build_pairs
  bool is_positive = false;
};

struct ScoredPair {
  double score = 0.0;
  bool is_positive = false;
  std::string target_id;
};

// Verification pairs for one target identity: positives are all unordered
// pairs of distinct self-reenactments; negatives pair each self-reenactment
// with each cross-reenactment rendered onto the same target. Targets lacking
// either side are skipped (reason reported, never an error).
std::vector<PairSpec> build_pairs(const std::vector<const VideoRecord*>& records,
                                  const std::string& target_id, std::string* skip_reason);

struct EvalReport {
  std::map<std::string, double> per_target_auc;
  double mean_auc = 0.0;
  std::map<std::string, double> per_generator_auc;
  std::string condition;
  int clip_length = 0;
  std::string config_hash;
  std::vector<std::string> skipped_targets;
  std::string tool_version = kToolVersion;
  std::vector<std::string> notes;
};

struct EvalOptions {
  Split split = Split::test;
  std::int64_t clip_length = 64;
  std::string condition;
  std::string config_hash;
  bool per_generator = true;
};

using EmbedFn = std::function<std::vector<double>(const VideoRecord&)>;

// Per-target AUC protocol over one split. Deterministic given (manifest,
// embedder). Throws DataError when no target is evaluable.
EvalReport evaluate(const Manifest& manifest, const EmbedFn& embed, const EvalOptions& opts);

template <typename T>
Tensor<T> cast_clip(const Tensor<float>& clip) {
  if constexpr (std::is_same_v<T, float>) {
    return clip;
  } else {
    Tensor<T> out(clip.shape);
    for (std::int64_t i = 0; i < clip.numel(); ++i) out[i] = static_cast<T>(clip[i]);
    return out;
  }
}

// One deterministic center clip -> embedding (eval mode).
template <typename T>
std::vector<double> embed_video(const F5CModel<T>& model, const VideoRecord& record,
                                std::int64_t clip_length) {
  SamplerConfig scfg;
  scfg.clip_length = clip_length;
  scfg.mode = SampleMode::eval_center;
  const Tensor<T> clip = cast_clip<T>(make_clip(record, scfg, nullptr));
  const Tensor<T> emb = model.embed_clip(clip, /*train=*/false);
  std::vector<double> out(static_cast<std::size_t>(emb.numel()));
  for (std::int64_t i = 0; i < emb.numel(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<double>(emb[i]);
  return out;
}

template <typename T>
EmbedFn model_embedder(const F5CModel<T>* model, std::int64_t clip_length) {
  return [model, clip_length](const VideoRecord& rec) {
    return embed_video(*model, rec, clip_length);
  };
}

// Runner outputs (consumed by the report module).
struct AblationRow {
  std::string label;
  EvalReport report;
};

struct CrossGenResult {
  std::vector<std::string> tags;                  // row = training tag, col = test tag
  std::vector<std::vector<double>> matrix;        // mean AUC
};

}  // namespace fingerdiff
