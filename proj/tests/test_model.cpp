#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fingerdiff/checkpoint.hpp"
#include "fingerdiff/model.hpp"
#include "fingerdiff/rng.hpp"
#include "test_util.hpp"

using namespace fingerdiff;

namespace {

// Small trunk on full-size frames; used where the default width is overkill.
ModelConfig mini_config(Condition cond = Condition::feat_diff, int clip_length = 6) {
  ModelConfig cfg;
  cfg.condition = cond;
  cfg.clip_length = clip_length;
  cfg.ccc_k = 4;
  cfg.embed_dim = 32;
  cfg.convstack_channels = {4, 8, 8, 16};
  return cfg;
}

template <typename T>
Tensor<T> random_clip(std::int64_t frames, std::int64_t size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> clip({frames, 1, size, size});
  for (auto& v : clip.data) v = static_cast<T>(rng.uniform01());
  return clip;
}

template <typename T>
Tensor<T> constant_clip(std::int64_t frames, std::int64_t size, T value) {
  Tensor<T> clip({frames, 1, size, size});
  std::fill(clip.data.begin(), clip.data.end(), value);
  return clip;
}

// One random frame (a random "appearance") repeated across all frames.
template <typename T>
Tensor<T> constant_frame_clip(std::int64_t frames, std::int64_t size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> clip({frames, 1, size, size});
  const std::int64_t fsz = size * size;
  for (std::int64_t i = 0; i < fsz; ++i) clip[i] = static_cast<T>(rng.uniform01());
  for (std::int64_t t = 1; t < frames; ++t)
    std::copy(clip.ptr(), clip.ptr() + fsz, clip.ptr() + t * fsz);
  return clip;
}

// Values on a dyadic grid so sums and differences are exact in floating point.
double grid_value(Rng& rng, double scale = 1.0) {
  return scale * static_cast<double>(rng.uniform_int(-(1 << 20), 1 << 20)) * 0x1.0p-20;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("convstack: spatial trace 128 -> 64 -> 32 -> 16 -> 16") {
  ModelConfig cfg = mini_config();
  F5CModel<float> model(cfg, 1);

  Tensor<float> x = random_clip<float>(2, 128, 7);
  Tensor<float> y = model.stack_.conv[0].forward(x, nullptr);
  CHECK(y.shape == std::vector<std::int64_t>{2, 4, 64, 64});
  y = model.stack_.conv[1].forward(y, nullptr);
  CHECK(y.shape == std::vector<std::int64_t>{2, 8, 32, 32});
  y = model.stack_.conv[2].forward(y, nullptr);
  CHECK(y.shape == std::vector<std::int64_t>{2, 8, 16, 16});
  y = model.stack_.conv[3].forward(y, nullptr);
  CHECK(y.shape == std::vector<std::int64_t>{2, 16, 16, 16});

  const auto maps = model.convstack_forward(random_clip<float>(3, 128, 8));
  CHECK(maps.shape == std::vector<std::int64_t>{3, 16, 16, 16});
}

TEST_CASE("convstack: eval mode is pure and finite on zero input") {
  F5CModel<float> model(mini_config(), 2);
  const auto zero = constant_clip<float>(2, 128, 0.0f);
  const auto y1 = model.convstack_forward(zero);
  const auto y2 = model.convstack_forward(zero);
  CHECK(y1.data == y2.data);
  CHECK(all_finite(y1));

  const auto x = random_clip<float>(2, 128, 9);
  CHECK(model.convstack_forward(x).data == model.convstack_forward(x).data);
}

TEST_CASE("backbone: per-frame weight sharing permutes with the frames") {
  F5CModel<float> model(mini_config(), 3);
  const auto clip = random_clip<float>(4, 128, 10);
  const auto maps = model.backbone_forward(clip);
  REQUIRE(maps.dim(0) == 4);

  Tensor<float> reversed(clip.shape);
  const std::int64_t fsz = clip.numel() / clip.dim(0);
  for (std::int64_t t = 0; t < 4; ++t)
    std::copy(clip.ptr() + t * fsz, clip.ptr() + (t + 1) * fsz,
              reversed.ptr() + (3 - t) * fsz);
  const auto rmaps = model.backbone_forward(reversed);

  const std::int64_t msz = maps.numel() / maps.dim(0);
  for (std::int64_t t = 0; t < 4; ++t)
    for (std::int64_t i = 0; i < msz; ++i)
      CHECK(rmaps[(3 - t) * msz + i] == maps[t * msz + i]);

  // identical frames give identical maps
  const auto cmaps = model.backbone_forward(constant_clip<float>(3, 128, 0.4f));
  for (std::int64_t t = 1; t < 3; ++t)
    for (std::int64_t i = 0; i < msz; ++i) CHECK(cmaps[t * msz + i] == cmaps[i]);
}

TEST_CASE("build_motion_tensor: oracle, constants, ramps, shift invariance") {
  Rng rng(11);

  SUBCASE("constant sequence cancels exactly") {
    Tensor<double> maps({5, 3, 4, 4});
    for (auto& v : maps.data) v = 0.0;
    const std::int64_t fsz = maps.numel() / 5;
    for (std::int64_t i = 0; i < fsz; ++i) {
      const double u = rng.normal(0.0, 1.0);
      for (std::int64_t t = 0; t < 5; ++t) maps[t * fsz + i] = u;
    }
    const auto d = build_motion_tensor(maps);
    REQUIRE(d.shape == std::vector<std::int64_t>{4, 3, 4, 4});
    for (const double v : d.data) CHECK(v == 0.0);
  }

  SUBCASE("linear ramp gives the step everywhere") {
    // grid-aligned steps keep t*u exact, so the equality is bitwise
    Tensor<double> maps({4, 2, 3, 3});
    Tensor<double> u({2, 3, 3});
    for (auto& v : u.data) v = grid_value(rng);
    for (std::int64_t t = 0; t < 4; ++t)
      for (std::int64_t i = 0; i < u.numel(); ++i)
        maps[t * u.numel() + i] = static_cast<double>(t) * u[i];
    const auto d = build_motion_tensor(maps);
    for (std::int64_t t = 0; t < 3; ++t)
      for (std::int64_t i = 0; i < u.numel(); ++i) CHECK(d[t * u.numel() + i] == u[i]);
  }

  SUBCASE("random sequences match the elementwise-subtraction oracle exactly") {
    for (int trial = 0; trial < 100; ++trial) {
      Tensor<double> maps({3, 2, 2, 2});
      for (auto& v : maps.data) v = rng.normal(0.0, 2.0);
      const auto d = build_motion_tensor(maps);
      const std::int64_t fsz = maps.numel() / 3;
      for (std::int64_t t = 0; t < 2; ++t)
        for (std::int64_t i = 0; i < fsz; ++i)
          CHECK(d[t * fsz + i] == maps[(t + 1) * fsz + i] - maps[t * fsz + i]);
    }
  }

  SUBCASE("time-constant offsets cancel exactly") {
    // grid-aligned values make F + A exact, exposing the algebraic identity
    Tensor<double> maps({4, 2, 3, 3}), offset({2, 3, 3});
    for (auto& v : maps.data) v = grid_value(rng);
    for (auto& v : offset.data) v = grid_value(rng);
    Tensor<double> shifted = maps;
    const std::int64_t fsz = offset.numel();
    for (std::int64_t t = 0; t < 4; ++t)
      for (std::int64_t i = 0; i < fsz; ++i) shifted[t * fsz + i] += offset[i];
    CHECK(build_motion_tensor(maps).data == build_motion_tensor(shifted).data);
  }

  SUBCASE("fewer than two maps is an error") {
    Tensor<double> one({1, 2, 2, 2});
    CHECK_THROWS_AS(build_motion_tensor(one), NumericError);
  }
}

TEST_CASE("condition_forward: temporal extents per condition") {
  const std::int64_t t = 6;
  const auto clip = random_clip<float>(t, 128, 12);

  F5CModel<float> feat(mini_config(Condition::feat_diff, t), 4);
  CHECK(feat.condition_forward(clip).shape ==
        std::vector<std::int64_t>{t - 1, 16, 16, 16});

  F5CModel<float> pix(mini_config(Condition::pixel_diff, t), 4);
  CHECK(pix.condition_forward(clip).shape == std::vector<std::int64_t>{t - 1, 16, 16, 16});

  F5CModel<float> raw(mini_config(Condition::raw_feat, t), 4);
  CHECK(raw.condition_forward(clip).shape == std::vector<std::int64_t>{t, 16, 16, 16});

  F5CModel<float> stat(mini_config(Condition::static_frame, t), 4);
  CHECK(stat.condition_forward(clip).shape == std::vector<std::int64_t>{1, 16, 16, 16});
}

TEST_CASE("condition_forward: feat_diff on a constant clip is an all-zero head input") {
  F5CModel<float> model(mini_config(Condition::feat_diff, 5), 5);
  const auto head_in = model.condition_forward(constant_clip<float>(5, 128, 0.37f));
  for (const float v : head_in.data) CHECK(v == 0.0f);
}

TEST_CASE("condition_forward: pixel_diff removes a shared global offset per step") {
  // I_{t+1} = I_t + c: every difference frame is the constant c, so all
  // backbone inputs are identical and so are the per-frame feature maps.
  F5CModel<float> model(mini_config(Condition::pixel_diff, 4), 6);
  Tensor<float> clip({4, 1, 128, 128});
  Rng rng(13);
  const std::int64_t fsz = clip.numel() / 4;
  // base frame and offset on a coarse dyadic grid: the additions are exact,
  // so every difference frame is bitwise the constant 0.0625
  for (std::int64_t i = 0; i < fsz; ++i)
    clip[i] = static_cast<float>(rng.uniform_int(0, 256)) * 0x1.0p-10f;
  for (std::int64_t t = 1; t < 4; ++t)
    for (std::int64_t i = 0; i < fsz; ++i)
      clip[t * fsz + i] = clip[(t - 1) * fsz + i] + 0.0625f;

  const auto head_in = model.condition_forward(clip);
  const std::int64_t msz = head_in.numel() / head_in.dim(0);
  for (std::int64_t t = 1; t < head_in.dim(0); ++t)
    for (std::int64_t i = 0; i < msz; ++i) CHECK(head_in[t * msz + i] == head_in[i]);
}

TEST_CASE("condition_forward: static uses exactly the center frame") {
  const std::int64_t t = 7;
  F5CModel<float> model(mini_config(Condition::static_frame, t), 7);
  auto clip = random_clip<float>(t, 128, 14);
  const auto emb1 = model.embed_clip(clip);

  // scramble every frame except the center (index t/2 = 3)
  Rng rng(15);
  const std::int64_t fsz = clip.numel() / t;
  for (std::int64_t f = 0; f < t; ++f) {
    if (f == t / 2) continue;
    for (std::int64_t i = 0; i < fsz; ++i)
      clip[f * fsz + i] = static_cast<float>(rng.uniform01());
  }
  const auto emb2 = model.embed_clip(clip);
  CHECK(emb1.data == emb2.data);
}

TEST_CASE("head_forward: unit norm, determinism, and temporal-extent validation") {
  F5CModel<float> model(mini_config(Condition::feat_diff, 4), 8);
  Rng rng(16);
  Tensor<float> head_in({3, 16, 16, 16});
  for (auto& v : head_in.data) v = static_cast<float>(rng.normal(0.0, 1.0));

  const auto emb = model.head_forward(head_in);
  REQUIRE(emb.shape == std::vector<std::int64_t>{32});
  double norm = 0.0;
  for (const float v : emb.data) norm += static_cast<double>(v) * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));

  // zero input: bias-driven, deterministic in eval mode
  Tensor<float> zeros({2, 16, 16, 16});
  zeros.zero();
  const auto e1 = model.head_forward(zeros);
  const auto e2 = model.head_forward(zeros);
  CHECK(e1.data == e2.data);
  CHECK(all_finite(e1));

  Tensor<float> bad({0, 16, 16, 16});
  CHECK_THROWS_AS(model.head_forward(bad), NumericError);
}

TEST_CASE("embed_clip: appearance cancellation under feat_diff (eval, exact)") {
  F5CModel<float> model(mini_config(Condition::feat_diff, 5), 9);
  const auto emb_a = model.embed_clip(constant_frame_clip<float>(5, 128, 31));
  const auto emb_b = model.embed_clip(constant_frame_clip<float>(5, 128, 32));
  CHECK(max_abs_diff(emb_a, emb_b) < 1e-5);
}

TEST_CASE("embed_clip: static and raw_feat keep appearance separated") {
  for (const Condition cond : {Condition::static_frame, Condition::raw_feat}) {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
      F5CModel<float> model(mini_config(cond, 5), seed);
      const auto emb_a = model.embed_clip(constant_frame_clip<float>(5, 128, 31));
      const auto emb_b = model.embed_clip(constant_frame_clip<float>(5, 128, 32));
      double dot = 0.0;
      for (std::int64_t i = 0; i < emb_a.numel(); ++i)
        dot += static_cast<double>(emb_a[i]) * emb_b[i];
      CHECK(1.0 - dot >= 1e-2);  // cosine distance
    }
  }
}

TEST_CASE("count_parameters: default configuration meets the size budget") {
  ModelConfig cfg;  // defaults: (16,32,64,128), embed 256
  F5CModel<float> model(cfg, 10);
  const auto counts = model.count_parameters();

  CHECK(counts.total >= 450000);
  CHECK(counts.total <= 620000);
  CHECK(counts.backbone <= 80000);

  // two-layer perceptron alone: 512*256+256 + 256*256+256
  const std::int64_t mlp = model.head_.fc1.w.numel() + model.head_.fc1.b.numel() +
                           model.head_.fc2.w.numel() + model.head_.fc2.b.numel();
  CHECK(mlp == 512 * 256 + 256 + 256 * 256 + 256);
  CHECK(counts.total == counts.backbone + counts.head);
}

TEST_CASE("checkpoint: save/load round trip reproduces embeddings") {
  fdtest::TempDir tmp("ckpt");
  ModelConfig cfg = mini_config(Condition::feat_diff, 4);
  F5CModel<float> model(cfg, 11);

  // move running stats off their init values so they are exercised too
  const auto clip = random_clip<float>(4, 128, 17);
  F5CModel<float>::ClipCache cache;
  model.embed_clip(clip, /*train=*/true, /*dropout_seed=*/3, &cache);
  model.fold_bn_stats(cache);

  CheckpointMeta meta;
  meta.model_config = cfg;
  meta.epoch = 1;
  meta.rng_seed = 11;
  meta.manifest_hash = "deadbeef";
  save_checkpoint(model, tmp.path / "ckpt", meta);

  CheckpointMeta loaded_meta;
  F5CModel<float> loaded = load_checkpoint<float>(tmp.path / "ckpt", &loaded_meta);
  CHECK(loaded_meta.epoch == 1);
  CHECK(loaded_meta.manifest_hash == "deadbeef");
  CHECK(loaded_meta.model_config.embed_dim == cfg.embed_dim);

  const auto e1 = model.embed_clip(clip);
  const auto e2 = loaded.embed_clip(clip);
  CHECK(max_abs_diff(e1, e2) < 1e-6);

  // tampered schema version must be rejected
  {
    std::ifstream in(tmp.path / "ckpt.json");
    nlohmann::json sidecar;
    in >> sidecar;
    sidecar["schema_version"] = 999;
    std::ofstream out(tmp.path / "ckpt.json");
    out << sidecar.dump();
  }
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.path / "ckpt"), IoError);
}

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.clip_length = 1;
  CHECK_THROWS_AS(F5CModel<float>(cfg, 0), ConfigError);  // feat_diff needs >= 2
  cfg.clip_length = 8;
  cfg.ccc_k = 0;
  CHECK_THROWS_AS(F5CModel<float>(cfg, 0), ConfigError);
  cfg.ccc_k = 4;
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(F5CModel<float>(cfg, 0), ConfigError);
  cfg.dropout = 0.3;
  cfg.convstack_channels = {16, 32, 64, 126};  // not divisible by 4
  CHECK_THROWS_AS(F5CModel<float>(cfg, 0), ConfigError);
}

TEST_CASE("model grads: registry order matches the parameter walk") {
  F5CModel<float> model(mini_config(), 12);
  ModelGrads<float> grads;
  grads.init(model);

  std::vector<std::vector<std::int64_t>> param_shapes;
  model.for_each_param([&](const std::string&, Tensor<float>& t) {
    param_shapes.push_back(t.shape);
  });
  std::size_t idx = 0;
  grads.for_each([&](Tensor<float>& g) {
    REQUIRE(idx < param_shapes.size());
    CHECK(g.shape == param_shapes[idx]);
    ++idx;
  });
  CHECK(idx == param_shapes.size());
}
