// fingerdiff: driver-verification toolkit for synthetic talking-head video.
//
// Subcommands: synth-data, train, evaluate, cross-gen, ablate, embed,
// verify, report. All runs share one JSON config file (sections: model,
// train, sampler, synth); --set key=value overrides individual fields and
// the fully merged config is echoed and written next to the outputs.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fingerdiff/checkpoint.hpp"
#include "fingerdiff/config.hpp"
#include "fingerdiff/errors.hpp"
#include "fingerdiff/eval.hpp"
#include "fingerdiff/report.hpp"
#include "fingerdiff/runners.hpp"
#include "fingerdiff/synth.hpp"
#include "fingerdiff/trainer.hpp"
#include "fingerdiff/version.hpp"

namespace fd = fingerdiff;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::int64_t seed = -1;  // -1: keep the config's seeds
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.overrides,
                  "override a config field, e.g. --set model.ccc_k=8 (repeatable)");
  cmd->add_option("--out", args.out_dir,
                  "output directory (default: $FINGERDIFF_OUT or ./out)");
  cmd->add_option("--seed", args.seed,
                  "set train.seed, sampler.rng_seed and synth.motion_seed at once");
}

std::filesystem::path resolve_out(const CommonArgs& args) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (const char* env = std::getenv("FINGERDIFF_OUT")) return env;
  return "out";
}

fd::ToolConfig resolve_config(const CommonArgs& args, const std::filesystem::path& out_dir) {
  fd::ToolConfig cfg = fd::load_tool_config(
      args.config_path.empty() ? std::filesystem::path{}
                               : std::filesystem::path(args.config_path),
      args.overrides);
  if (args.seed >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    cfg.sampler.rng_seed = static_cast<std::uint64_t>(args.seed);
    cfg.synth.motion_seed = static_cast<std::uint64_t>(args.seed);
  }
  const json resolved = fd::tool_config_to_json(cfg);
  std::cout << json{{"resolved_config", resolved}}.dump() << "\n";
  std::filesystem::create_directories(out_dir);
  std::ofstream echo(out_dir / "resolved_config.json");
  echo << resolved.dump(2) << "\n";
  if (!echo) throw fd::IoError("cannot write resolved config to '" + out_dir.string() + "'");
  return cfg;
}

std::vector<double> load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw fd::IoError("cannot open embedding file '" + path.string() + "'");
  json j;
  try {
    in >> j;
    return j.at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw fd::DataError("bad embedding file '" + path.string() + "': " + e.what());
  }
}

const fd::VideoRecord& find_record(const fd::Manifest& manifest, const std::string& video) {
  const fd::VideoRecord* rec = manifest.find_by_path(video);
  if (!rec)
    throw fd::DataError("video '" + video + "' not found in the manifest (match video_path)");
  return *rec;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw fd::DataError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

json embedding_json(const fd::VideoRecord& rec, const std::vector<double>& emb,
                    const std::string& hash) {
  return json{{"video_path", rec.video_path},
              {"embedding", emb},
              {"config_hash", hash},
              {"tool_version", fd::kToolVersion}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fingerdiff: appearance-agnostic driver verification for synthetic video"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* synth_cmd = app.add_subcommand("synth-data", "render a synthetic dataset");
  add_common(synth_cmd, args);

  std::string manifest_path;
  auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  add_common(train_cmd, args);
  train_cmd->add_option("--manifest", manifest_path, "manifest.jsonl")->required();

  std::string checkpoint_path;
  auto* eval_cmd = app.add_subcommand("evaluate", "per-target verification AUC on the test split");
  add_common(eval_cmd, args);
  eval_cmd->add_option("--manifest", manifest_path)->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint base path (no extension)")
      ->required();

  auto* crossgen_cmd =
      app.add_subcommand("cross-gen", "train per generator tag, evaluate on every tag");
  add_common(crossgen_cmd, args);
  crossgen_cmd->add_option("--manifest", manifest_path)->required();

  std::string axis = "condition";
  std::vector<std::string> axis_values;
  auto* ablate_cmd = app.add_subcommand("ablate", "representation or clip-length ablation");
  add_common(ablate_cmd, args);
  ablate_cmd->add_option("--manifest", manifest_path)->required();
  ablate_cmd->add_option("--axis", axis, "condition | clip_length")
      ->check(CLI::IsMember({"condition", "clip_length"}));
  ablate_cmd->add_option("--values", axis_values, "row values (default: the full set)");

  std::string video_path, output_path;
  auto* embed_cmd = app.add_subcommand("embed", "embed one video with a trained model");
  add_common(embed_cmd, args);
  embed_cmd->add_option("--manifest", manifest_path)->required();
  embed_cmd->add_option("--video", video_path, "video_path as it appears in the manifest")
      ->required();
  embed_cmd->add_option("--checkpoint", checkpoint_path)->required();
  embed_cmd->add_option("--output", output_path, "embedding file (default <out>/embedding.json)");

  std::string enrolled_path;
  double threshold = 0.5;
  auto* verify_cmd =
      app.add_subcommand("verify", "score a video against an enrolled embedding");
  add_common(verify_cmd, args);
  verify_cmd->add_option("--manifest", manifest_path)->required();
  verify_cmd->add_option("--video", video_path)->required();
  verify_cmd->add_option("--checkpoint", checkpoint_path)->required();
  verify_cmd->add_option("--embedding", enrolled_path, "enrolled embedding JSON")->required();
  verify_cmd->add_option("--threshold", threshold, "cosine accept threshold (default 0.5)");

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "re-emit report files and figures");
  add_common(report_cmd, args);
  report_cmd->add_option("--report", report_path, "report.json produced by evaluate")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::filesystem::path out_dir = resolve_out(args);

    if (synth_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::generate_synthetic_dataset(cfg.synth, out_dir);
      std::cout << json{{"manifest", (out_dir / "manifest.jsonl").string()},
                        {"records", manifest.records.size()}}
                       .dump()
                << "\n";
    } else if (train_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::load_manifest(manifest_path);
      const fd::TrainResult result =
          fd::train_model(manifest, cfg.model, cfg.train, cfg.sampler, out_dir);
      json summary{{"final_checkpoint", result.final_checkpoint.string()},
                   {"best_checkpoint", result.best_checkpoint.string()},
                   {"metrics", result.metrics_path.string()}};
      if (result.best_val_auc >= 0.0) summary["best_val_auc"] = result.best_val_auc;
      std::cout << summary.dump() << "\n";
    } else if (eval_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::load_manifest(manifest_path);
      fd::CheckpointMeta meta;
      const fd::F5CModel<float> model = fd::load_checkpoint<float>(checkpoint_path, &meta);
      fd::EvalOptions opts;
      opts.clip_length = cfg.sampler.clip_length;
      opts.condition = fd::condition_name(meta.model_config.condition);
      opts.config_hash = fd::config_hash(cfg);
      const fd::EvalReport report =
          fd::evaluate(manifest, fd::model_embedder(&model, opts.clip_length), opts);
      fd::emit_report(report, out_dir);
      std::cout << json{{"mean_auc", report.mean_auc},
                        {"targets", report.per_target_auc.size()},
                        {"skipped", report.skipped_targets.size()},
                        {"report", (out_dir / "report.json").string()}}
                       .dump()
                << "\n";
    } else if (crossgen_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::load_manifest(manifest_path);
      const fd::CrossGenResult result = fd::cross_generator_matrix(
          manifest, cfg.model, cfg.train, cfg.sampler, out_dir / "runs");
      fd::emit_crossgen(result, out_dir);
      std::cout << json{{"tags", result.tags}, {"matrix", result.matrix}}.dump() << "\n";
    } else if (ablate_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::load_manifest(manifest_path);
      const auto rows = fd::run_ablation(
          manifest, cfg.model, cfg.train, cfg.sampler,
          axis == "condition" ? fd::AblationAxis::condition : fd::AblationAxis::clip_length,
          axis_values, out_dir / "runs");
      fd::emit_ablation(rows, axis, out_dir);
      json table = json::array();
      for (const auto& row : rows)
        table.push_back({{"label", row.label}, {"mean_auc", row.report.mean_auc}});
      std::cout << json{{"axis", axis}, {"rows", table}}.dump() << "\n";
    } else if (embed_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::load_manifest(manifest_path);
      const fd::F5CModel<float> model = fd::load_checkpoint<float>(checkpoint_path);
      const fd::VideoRecord& rec = find_record(manifest, video_path);
      const auto emb = fd::embed_video(model, rec, cfg.sampler.clip_length);
      const std::filesystem::path out_file =
          output_path.empty() ? out_dir / "embedding.json" : std::filesystem::path(output_path);
      std::ofstream out(out_file);
      out << embedding_json(rec, emb, fd::config_hash(cfg)).dump(2) << "\n";
      if (!out) throw fd::IoError("cannot write embedding to '" + out_file.string() + "'");
      std::cout << json{{"embedding", out_file.string()}}.dump() << "\n";
    } else if (verify_cmd->parsed()) {
      const fd::ToolConfig cfg = resolve_config(args, out_dir);
      const fd::Manifest manifest = fd::load_manifest(manifest_path);
      const fd::F5CModel<float> model = fd::load_checkpoint<float>(checkpoint_path);
      const fd::VideoRecord& rec = find_record(manifest, video_path);
      const auto probe = fd::embed_video(model, rec, cfg.sampler.clip_length);
      const auto enrolled = load_embedding_file(enrolled_path);
      const double score = cosine(probe, enrolled);
      std::cout << json{{"score", score},
                        {"threshold", threshold},
                        {"decision", score >= threshold ? "accept" : "reject"}}
                       .dump()
                << "\n";
    } else if (report_cmd->parsed()) {
      std::ifstream in(report_path);
      if (!in) throw fd::IoError("cannot open report '" + report_path + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw fd::DataError(std::string("bad report JSON: ") + e.what());
      }
      std::filesystem::create_directories(out_dir);
      fd::emit_report(fd::report_from_json(j), out_dir);
      std::cout << json{{"report", (out_dir / "report.json").string()}}.dump() << "\n";
    }
    return 0;
  } catch (const fd::ConfigError& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const fd::DataError& e) {
    std::cerr << "error (data): " << e.what() << "\n";
    return 3;
  } catch (const fd::NumericError& e) {
    std::cerr << "error (numeric): " << e.what() << "\n";
    return 4;
  } catch (const fd::IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error (internal): " << e.what() << "\n";
    return 1;
  }
}
