#include "fingerdiff/runners.hpp"

#include "fingerdiff/checkpoint.hpp"
#include "fingerdiff/errors.hpp"
#include "fingerdiff/report.hpp"

namespace fingerdiff {

CrossGenResult cross_generator_matrix(const Manifest& manifest, const ModelConfig& model_cfg,
                                      const TrainConfig& train_cfg,
                                      const SamplerConfig& sampler_cfg,
                                      const std::filesystem::path& work_dir) {
  CrossGenResult result;
  result.tags = manifest.generator_tags();
  if (result.tags.size() < 2)
    throw DataError("cross-gen: need at least 2 generator tags, found " +
                    std::to_string(result.tags.size()));

  for (const auto& train_tag : result.tags) {
    const Manifest train_view = manifest.filtered_by_generator(train_tag);
    const auto run_dir = work_dir / train_tag;
    const TrainResult trained =
        train_model(train_view, model_cfg, train_cfg, sampler_cfg, run_dir);
    F5CModel<float> model = load_checkpoint<float>(trained.best_checkpoint);

    std::vector<double> row;
    for (const auto& test_tag : result.tags) {
      const Manifest test_view = manifest.filtered_by_generator(test_tag);
      EvalOptions opts;
      opts.clip_length = sampler_cfg.clip_length;
      opts.condition = condition_name(model_cfg.condition);
      opts.per_generator = false;
      const EvalReport report =
          evaluate(test_view, model_embedder(&model, sampler_cfg.clip_length), opts);
      emit_report(report, run_dir / ("eval_" + test_tag));
      row.push_back(report.mean_auc);
    }
    result.matrix.push_back(std::move(row));
  }
  return result;
}

std::vector<AblationRow> run_ablation(const Manifest& manifest, const ModelConfig& model_cfg,
                                      const TrainConfig& train_cfg,
                                      const SamplerConfig& sampler_cfg, AblationAxis axis,
                                      std::vector<std::string> values,
                                      const std::filesystem::path& work_dir) {
  if (values.empty()) {
    values = axis == AblationAxis::condition
                 ? std::vector<std::string>{"feat_diff", "pixel_diff", "raw_feat", "static"}
                 : std::vector<std::string>{"16", "32", "64", "128"};
  }

  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    ModelConfig mc = model_cfg;
    SamplerConfig sc = sampler_cfg;
    if (axis == AblationAxis::condition) {
      mc.condition = condition_from_name(value);
    } else {
      const int t = std::stoi(value);
      mc.clip_length = t;
      sc.clip_length = t;
    }

    const auto run_dir = work_dir / (std::string(axis == AblationAxis::condition
                                                     ? "condition_"
                                                     : "clip_length_") +
                                     value);
    const TrainResult trained = train_model(manifest, mc, train_cfg, sc, run_dir);
    F5CModel<float> model = load_checkpoint<float>(trained.best_checkpoint);

    EvalOptions opts;
    opts.clip_length = sc.clip_length;
    opts.condition = condition_name(mc.condition);
    const EvalReport report =
        evaluate(manifest, model_embedder(&model, sc.clip_length), opts);
    emit_report(report, run_dir / "eval");
    rows.push_back({value, report});
  }
  return rows;
}

}  // namespace fingerdiff
