#include "fingerdiff/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fingerdiff/adamw.hpp"
#include "fingerdiff/batch_sampler.hpp"
#include "fingerdiff/checkpoint.hpp"
#include "fingerdiff/errors.hpp"
#include "fingerdiff/eval.hpp"
#include "fingerdiff/supcon.hpp"

namespace fingerdiff {

std::string manifest_hash(const Manifest& manifest) {
  std::ostringstream os;
  for (const auto& rec : manifest.records)
    os << rec.video_path << '|' << rec.target_id << '|' << rec.driver_id << '|'
       << rec.generator << '|' << split_name(rec.split) << '|' << rec.num_frames << '\n';
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(os.str())));
  return buf;
}

namespace {

bool val_split_evaluable(const Manifest& manifest) {
  const auto records = manifest.records_in(Split::val);
  if (records.empty()) return false;
  std::set<std::string> targets;
  for (const auto* r : records) targets.insert(r->target_id);
  for (const auto& t : targets) {
    std::string reason;
    if (!build_pairs(records, t, &reason).empty()) return true;
  }
  return false;
}

}  // namespace

TrainResult train_model(const Manifest& manifest, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const SamplerConfig& sampler_cfg,
                        const std::filesystem::path& out_dir) {
  model_cfg.validate();
  train_cfg.validate();
  if (model_cfg.clip_length != sampler_cfg.clip_length)
    throw ConfigError("train: model.clip_length and sampler.clip_length must agree");

  std::filesystem::create_directories(out_dir / "checkpoints");
  const std::string mhash = manifest_hash(manifest);

  F5CModel<float> model(model_cfg, train_cfg.seed);
  model.set_half_compute(train_cfg.mixed_precision);
  AdamW<float> optimizer(model);

  const int batch_size = train_cfg.n_identities_per_batch * train_cfg.clips_per_identity;
  Rng batch_rng(mix_seed(train_cfg.seed, "batch-sampler"));
  const std::uint64_t crop_stream = mix_seed(train_cfg.seed, "clip-crop");
  const std::uint64_t dropout_stream = mix_seed(train_cfg.seed, "dropout-stream");

  SamplerConfig train_sampler = sampler_cfg;
  train_sampler.mode = SampleMode::train_random;

  TrainResult result;
  result.metrics_path = out_dir / "metrics.jsonl";
  std::ofstream metrics(result.metrics_path);
  if (!metrics) throw IoError("cannot write metrics log '" + result.metrics_path.string() + "'");

  const bool has_val = val_split_evaluable(manifest);
  double last_grad_norm = 0.0;

  CheckpointMeta meta;
  meta.model_config = model_cfg;
  meta.rng_seed = train_cfg.seed;
  meta.manifest_hash = mhash;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    for (int step_in_epoch = 0; step_in_epoch < train_cfg.steps_per_epoch; ++step_in_epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::int64_t global_step =
          static_cast<std::int64_t>(epoch) * train_cfg.steps_per_epoch + step_in_epoch;
      const double lr = lr_at(global_step, train_cfg);

      const auto batch = sample_batch(manifest, train_cfg, batch_rng);

      // Labels by first occurrence of each driver in the batch.
      std::vector<int> labels(batch.size());
      {
        std::map<std::string, int> label_ids;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          auto [it, inserted] =
              label_ids.emplace(batch[i].driver_label, static_cast<int>(label_ids.size()));
          labels[i] = it->second;
        }
      }

      // Phase 1: per-clip forward with caches. Every clip is independent;
      // per-slot rngs keep the result identical for any thread count.
      std::vector<F5CModel<float>::ClipCache> caches(batch.size());
      Tensor<float> embeddings({static_cast<std::int64_t>(batch.size()), model_cfg.embed_dim});
      const std::int64_t n_slots = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(dynamic)
      for (std::int64_t i = 0; i < n_slots; ++i) {
        const std::uint64_t slot_salt =
            static_cast<std::uint64_t>(global_step) * static_cast<std::uint64_t>(batch_size) +
            static_cast<std::uint64_t>(i);
        Rng crop_rng(mix_seed(crop_stream, slot_salt));
        const Tensor<float> clip =
            make_clip(*batch[static_cast<std::size_t>(i)].record, train_sampler, &crop_rng);
        const Tensor<float> emb =
            model.embed_clip(clip, /*train=*/true, mix_seed(dropout_stream, slot_salt),
                             &caches[static_cast<std::size_t>(i)]);
        std::copy(emb.ptr(), emb.ptr() + model_cfg.embed_dim,
                  embeddings.ptr() + i * model_cfg.embed_dim);
      }

      // Running BN stats fold in slot order (deterministic).
      for (auto& cache : caches) model.fold_bn_stats(cache);

      SupConConfig sc_cfg;
      Tensor<float> emb_grad;
      const double loss = supcon_loss(embeddings, labels, sc_cfg, &emb_grad);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite loss at step " << global_step << " (lr " << lr
           << ", last grad norm " << last_grad_norm << ")";
        throw NumericError(os.str());
      }
      result.loss_history.push_back(loss);

      // Phase 2: per-clip backward into per-slot accumulators, reduced in
      // slot order.
      std::vector<ModelGrads<float>> slot_grads(batch.size());
#pragma omp parallel for schedule(dynamic)
      for (std::int64_t i = 0; i < n_slots; ++i) {
        slot_grads[static_cast<std::size_t>(i)].init(model);
        Tensor<float> g({model_cfg.embed_dim});
        std::copy(emb_grad.ptr() + i * model_cfg.embed_dim,
                  emb_grad.ptr() + (i + 1) * model_cfg.embed_dim, g.ptr());
        model.backward_clip(caches[static_cast<std::size_t>(i)], g,
                            slot_grads[static_cast<std::size_t>(i)]);
      }
      ModelGrads<float>& grads = slot_grads[0];
      for (std::size_t i = 1; i < slot_grads.size(); ++i) grads.add(slot_grads[i]);

      last_grad_norm = clip_global_norm(grads, train_cfg.grad_clip_norm);
      optimizer.step(grads, lr, train_cfg.weight_decay);

      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      nlohmann::json line{{"step", global_step}, {"epoch", epoch},       {"lr", lr},
                          {"loss", loss},        {"grad_norm", last_grad_norm},
                          {"wall_ms", wall_ms}};
      metrics << line.dump() << "\n";
      metrics.flush();
    }

    meta.epoch = epoch + 1;
    meta.global_step = static_cast<std::int64_t>(epoch + 1) * train_cfg.steps_per_epoch;
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04d", epoch + 1);
    save_checkpoint(model, out_dir / "checkpoints" / name, meta);

    if (has_val) {
      EvalOptions opts;
      opts.split = Split::val;
      opts.clip_length = sampler_cfg.clip_length;
      opts.condition = condition_name(model_cfg.condition);
      const EvalReport val_report =
          evaluate(manifest, model_embedder(&model, sampler_cfg.clip_length), opts);
      nlohmann::json line{{"epoch", epoch + 1}, {"val_mean_auc", val_report.mean_auc}};
      metrics << line.dump() << "\n";
      metrics.flush();
      if (val_report.mean_auc > result.best_val_auc) {
        result.best_val_auc = val_report.mean_auc;
        save_checkpoint(model, out_dir / "checkpoints" / "best", meta);
      }
    }
  }

  save_checkpoint(model, out_dir / "checkpoints" / "final", meta);
  result.final_checkpoint = out_dir / "checkpoints" / "final";
  result.best_checkpoint =
      has_val ? out_dir / "checkpoints" / "best" : result.final_checkpoint;
  return result;
}

}  // namespace fingerdiff
