#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "fingerdiff/model.hpp"
#include "fingerdiff/rng.hpp"
#include "fingerdiff/supcon.hpp"

// Whole-model gradient check: SupCon loss over a few miniature clips (16x16
// frames, scaled-down widths, T=3) against central finite differences in
// double precision. Dropout masks and BN batch statistics are part of the
// differentiated graph; the kNN graph is locally constant.

using namespace fingerdiff;

namespace {

ModelConfig tiny_config(Condition cond) {
  ModelConfig cfg;
  cfg.condition = cond;
  cfg.clip_length = 3;
  cfg.ccc_k = 2;
  cfg.dropout = 0.3;
  cfg.embed_dim = 12;
  cfg.convstack_channels = {4, 8, 8, 16};
  return cfg;
}

struct GradCheckSetup {
  F5CModel<double> model;
  std::vector<Tensor<double>> clips;
  std::vector<int> labels{0, 0, 1};

  explicit GradCheckSetup(Condition cond) : model(tiny_config(cond), 5150) {
    Rng rng(404);
    for (int i = 0; i < 3; ++i) {
      Tensor<double> clip({3, 1, 16, 16});
      for (auto& v : clip.data) v = rng.uniform01();
      clips.push_back(std::move(clip));
    }
  }

  double loss(ModelGrads<double>* grads) {
    const std::int64_t dim = model.config().embed_dim;
    Tensor<double> emb({static_cast<std::int64_t>(clips.size()), dim});
    std::vector<F5CModel<double>::ClipCache> caches(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto e = model.embed_clip(clips[i], /*train=*/true,
                                      /*dropout_seed=*/1000 + i,
                                      grads ? &caches[i] : nullptr);
      std::copy(e.ptr(), e.ptr() + dim, emb.ptr() + static_cast<std::int64_t>(i) * dim);
    }
    SupConConfig cfg;
    Tensor<double> emb_grad;
    const double value = supcon_loss(emb, labels, cfg, grads ? &emb_grad : nullptr);
    if (grads) {
      for (std::size_t i = 0; i < clips.size(); ++i) {
        Tensor<double> g({dim});
        std::copy(emb_grad.ptr() + static_cast<std::int64_t>(i) * dim,
                  emb_grad.ptr() + static_cast<std::int64_t>(i + 1) * dim, g.ptr());
        model.backward_clip(caches[i], g, *grads);
      }
    }
    return value;
  }
};

// Max relative FD error over parameters, optionally visiting every stride-th
// element to keep the slow conditions affordable.
double model_fd_error(GradCheckSetup& setup, int stride) {
  ModelGrads<double> grads;
  grads.init(setup.model);
  setup.loss(&grads);

  std::vector<Tensor<double>*> params;
  setup.model.for_each_param(
      [&](const std::string&, Tensor<double>& t) { params.push_back(&t); });
  std::vector<Tensor<double>*> grad_ptrs;
  grads.for_each([&](Tensor<double>& t) { grad_ptrs.push_back(&t); });
  REQUIRE(params.size() == grad_ptrs.size());

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<double>& p = *params[t];
    for (std::int64_t i = 0; i < p.numel(); i += stride) {
      const double saved = p[i];
      p[i] = saved + h;
      const double lp = setup.loss(nullptr);
      p[i] = saved - h;
      const double lm = setup.loss(nullptr);
      p[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double analytic = (*grad_ptrs[t])[i];
      // central differences carry roundoff ~ eps*|loss|/h ~ 1e-10 here, so
      // elements below 1e-6 are compared on an absolute scale
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(fd - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("gradcheck: feat_diff, every parameter") {
  GradCheckSetup setup(Condition::feat_diff);
  CHECK(model_fd_error(setup, 1) < 1e-3);
}

TEST_CASE("gradcheck: pixel_diff spot check") {
  GradCheckSetup setup(Condition::pixel_diff);
  CHECK(model_fd_error(setup, 5) < 1e-3);
}

TEST_CASE("gradcheck: raw_feat spot check") {
  GradCheckSetup setup(Condition::raw_feat);
  CHECK(model_fd_error(setup, 5) < 1e-3);
}

TEST_CASE("gradcheck: static spot check") {
  GradCheckSetup setup(Condition::static_frame);
  CHECK(model_fd_error(setup, 5) < 1e-3);
}
