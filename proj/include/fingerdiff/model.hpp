#pragma once

#include <array>
#include <string>

#include "fingerdiff/ccc.hpp"
#include "fingerdiff/errors.hpp"
#include "fingerdiff/fcc.hpp"
#include "fingerdiff/nn.hpp"

namespace fingerdiff {

enum class Condition { feat_diff, pixel_diff, raw_feat, static_frame };

inline const char* condition_name(Condition c) {
  switch (c) {
    case Condition::feat_diff: return "feat_diff";
    case Condition::pixel_diff: return "pixel_diff";
    case Condition::raw_feat: return "raw_feat";
    case Condition::static_frame: return "static";
  }
  return "?";
}

inline Condition condition_from_name(const std::string& s) {
  if (s == "feat_diff") return Condition::feat_diff;
  if (s == "pixel_diff") return Condition::pixel_diff;
  if (s == "raw_feat") return Condition::raw_feat;
  if (s == "static") return Condition::static_frame;
  throw ConfigError("unknown condition '" + s +
                    "' (expected feat_diff|pixel_diff|raw_feat|static)");
}

struct ModelConfig {
  Condition condition = Condition::feat_diff;
  int clip_length = 64;
  int ccc_k = 4;
  double dropout = 0.3;
  int embed_dim = 256;
  std::array<int, 4> convstack_channels{16, 32, 64, 128};

  void validate() const {
    if (clip_length < 1) throw ConfigError("model: clip_length must be >= 1");
    if ((condition == Condition::feat_diff || condition == Condition::pixel_diff) &&
        clip_length < 2)
      throw ConfigError("model: differencing conditions need clip_length >= 2");
    if (ccc_k < 1) throw ConfigError("model: ccc_k must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
    if (embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1");
    for (int c : convstack_channels)
      if (c < 4) throw ConfigError("model: convstack channels must be >= 4");
    if (convstack_channels[3] % 4 != 0)
      throw ConfigError("model: final backbone width must be divisible by 4");
  }
};

// d_t = f_{t+1} - f_t, stacked along the temporal axis (leading axis here;
// the layout is [T-1, C, H, W]). Also used for pixel-space differencing.
template <typename T>
Tensor<T> build_motion_tensor(const Tensor<T>& maps) {
  if (maps.ndim() != 4 || maps.dim(0) < 2)
    throw NumericError("build_motion_tensor: need at least 2 maps");
  Tensor<T> d({maps.dim(0) - 1, maps.dim(1), maps.dim(2), maps.dim(3)});
  const std::int64_t per_frame = maps.numel() / maps.dim(0);
  for (std::int64_t t = 0; t + 1 < maps.dim(0); ++t) {
    const T* a = maps.ptr() + t * per_frame;
    const T* b = maps.ptr() + (t + 1) * per_frame;
    T* out = d.ptr() + t * per_frame;
    for (std::int64_t i = 0; i < per_frame; ++i) out[i] = b[i] - a[i];
  }
  return d;
}

// ConvStack: strides (2,2,2,1), kernels (4,3,2,1), paddings (1,1,0,0); each
// conv is followed by batch norm and ReLU. 128x128 input -> C x 16 x 16.
template <typename T>
struct ConvStack {
  Conv2d<T> conv[4];
  BatchNorm<T> bn[4];

  struct Cache {
    typename Conv2d<T>::Cache conv[4];
    typename BatchNorm<T>::Cache bn[4];
    std::vector<std::uint8_t> mask[4];
  };

  void init(const std::array<int, 4>& widths, Rng& rng) {
    constexpr int ks[4] = {4, 3, 2, 1};
    constexpr int ss[4] = {2, 2, 2, 1};
    constexpr int ps[4] = {1, 1, 0, 0};
    int cin = 1;
    for (int i = 0; i < 4; ++i) {
      conv[i].init(cin, widths[static_cast<std::size_t>(i)], ks[i], ss[i], ps[i], rng);
      bn[i].init(widths[static_cast<std::size_t>(i)]);
      cin = widths[static_cast<std::size_t>(i)];
    }
  }

  Tensor<T> forward(const Tensor<T>& frames, bool train, Cache* cache, bool half) const {
    Tensor<T> x = frames;
    for (int i = 0; i < 4; ++i) {
      x = conv[i].forward(x, cache ? &cache->conv[i] : nullptr);
      x = bn[i].forward(x, train, cache ? &cache->bn[i] : nullptr);
      relu_forward_inplace(x, cache ? &cache->mask[i] : nullptr);
      round_to_half_inplace(x, half);
    }
    return x;
  }

  void backward(const Cache& cache, Tensor<T> gy, Tensor<T>* gw, Tensor<T>* ggamma,
                Tensor<T>* gbeta) const {
    for (int i = 3; i >= 0; --i) {
      relu_backward_inplace(gy, cache.mask[i]);
      Tensor<T> gz;
      bn[i].backward(cache.bn[i], gy, &gz, ggamma[i], gbeta[i]);
      if (i > 0) {
        Tensor<T> gx;
        conv[i].backward(cache.conv[i], gz, &gx, gw[i]);
        gy = std::move(gx);
      } else {
        conv[i].backward(cache.conv[i], gz, nullptr, gw[i]);  // raw frames are data
      }
    }
  }
};

// Temporal identity head: two Conv3D stages (stride (1,2,1), BN, ReLU),
// adaptive pooling to 4x4 with the temporal axis collapsed, then a two-layer
// MLP with dropout and l2 normalization.
template <typename T>
struct TemporalHead {
  Conv3d<T> conv1, conv2;
  BatchNorm<T> bn1, bn2;
  AdaptivePool<T> pool;
  Linear<T> fc1, fc2;
  Dropout<T> drop;
  int flatten_dim = 0;

  struct Cache {
    typename Conv3d<T>::Cache c1, c2;
    typename BatchNorm<T>::Cache b1, b2;
    std::vector<std::uint8_t> m1, m2, m3;
    typename AdaptivePool<T>::Cache pc;
    typename Linear<T>::Cache l1, l2;
    typename Dropout<T>::Cache dc;
    L2NormCache<T> norm;
  };

  void init(int cin, int embed_dim, double dropout_p, Rng& rng) {
    conv1.init(cin, cin / 2, rng);
    bn1.init(cin / 2);
    conv2.init(cin / 2, cin / 4, rng);
    bn2.init(cin / 4);
    drop.p = dropout_p;
    flatten_dim = (cin / 4) * pool.oh * pool.ow;
    fc1.init(flatten_dim, embed_dim, rng);
    fc2.init(embed_dim, embed_dim, rng);
  }

  // x: [Tt, C, H, W] with Tt >= 1 -> unit vector [embed_dim]
  Tensor<T> forward(const Tensor<T>& x, bool train, Rng* dropout_rng, Cache* cache,
                    bool half) const {
    if (x.ndim() != 4 || x.dim(0) < 1)
      throw NumericError("head: input must have temporal extent >= 1");
    Tensor<T> h = conv1.forward(x, cache ? &cache->c1 : nullptr);
    h = bn1.forward(h, train, cache ? &cache->b1 : nullptr);
    relu_forward_inplace(h, cache ? &cache->m1 : nullptr);
    round_to_half_inplace(h, half);
    h = conv2.forward(h, cache ? &cache->c2 : nullptr);
    h = bn2.forward(h, train, cache ? &cache->b2 : nullptr);
    relu_forward_inplace(h, cache ? &cache->m2 : nullptr);
    round_to_half_inplace(h, half);
    h = pool.forward(h, cache ? &cache->pc : nullptr);
    h.reshape({flatten_dim});
    h = fc1.forward(h, cache ? &cache->l1 : nullptr);
    relu_forward_inplace(h, cache ? &cache->m3 : nullptr);
    h = drop.forward(h, train, dropout_rng, cache ? &cache->dc : nullptr);
    h = fc2.forward(h, cache ? &cache->l2 : nullptr);
    round_to_half_inplace(h, half);
    return l2_normalize(h, cache ? &cache->norm : nullptr);
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& g_emb, Tensor<T>& gw1, Tensor<T>& gg1,
                     Tensor<T>& gb1, Tensor<T>& gw2, Tensor<T>& gg2, Tensor<T>& gb2,
                     Tensor<T>& gfc1_w, Tensor<T>& gfc1_b, Tensor<T>& gfc2_w,
                     Tensor<T>& gfc2_b) const {
    Tensor<T> g = l2_normalize_backward(cache.norm, g_emb);
    Tensor<T> gx;
    fc2.backward(cache.l2, g, &gx, gfc2_w, gfc2_b);
    g = drop.backward(cache.dc, gx);
    relu_backward_inplace(g, cache.m3);
    fc1.backward(cache.l1, g, &gx, gfc1_w, gfc1_b);
    gx.reshape({static_cast<std::int64_t>(conv2.cout), static_cast<std::int64_t>(pool.oh),
                static_cast<std::int64_t>(pool.ow)});
    g = pool.backward(cache.pc, gx);
    relu_backward_inplace(g, cache.m2);
    Tensor<T> gz;
    bn2.backward(cache.b2, g, &gz, gg2, gb2);
    conv2.backward(cache.c2, gz, &gx, gw2);
    relu_backward_inplace(gx, cache.m1);
    bn1.backward(cache.b1, gx, &gz, gg1, gb1);
    Tensor<T> gin;
    conv1.backward(cache.c1, gz, &gin, gw1);
    return gin;
  }
};

template <typename T>
class F5CModel;

// Gradient accumulator mirroring the model's parameters. for_each() walks the
// same canonical order as F5CModel::for_each_param.
template <typename T>
struct ModelGrads {
  Tensor<T> stack_w[4], stack_gamma[4], stack_beta[4];
  Tensor<T> fcc_h1, fcc_w1, fcc_w2, fcc_h2, fcc_fw, fcc_fb;
  Tensor<T> ccc_w;
  Tensor<T> head_w1, head_g1, head_b1, head_w2, head_g2, head_b2;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;

  void init(const F5CModel<T>& model);

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (int i = 0; i < 4; ++i) {
      fn(stack_w[i]);
      fn(stack_gamma[i]);
      fn(stack_beta[i]);
    }
    fn(fcc_h1);
    fn(fcc_w1);
    fn(fcc_w2);
    fn(fcc_h2);
    fn(fcc_fw);
    fn(fcc_fb);
    fn(ccc_w);
    fn(head_w1);
    fn(head_g1);
    fn(head_b1);
    fn(head_w2);
    fn(head_g2);
    fn(head_b2);
    fn(fc1_w);
    fn(fc1_b);
    fn(fc2_w);
    fn(fc2_b);
  }

  void zero() {
    for_each([](Tensor<T>& t) { t.zero(); });
  }

  void add(ModelGrads& other) {
    std::size_t idx = 0;
    std::vector<Tensor<T>*> mine;
    for_each([&](Tensor<T>& t) { mine.push_back(&t); });
    other.for_each([&](Tensor<T>& t) {
      Tensor<T>* dst = mine[idx++];
      for (std::int64_t i = 0; i < t.numel(); ++i) (*dst)[i] += t[i];
    });
  }

  double squared_norm() {
    double sq = 0.0;
    for_each([&](Tensor<T>& t) {
      for (const T& v : t.data) sq += static_cast<double>(v) * v;
    });
    return sq;
  }

  void scale(double s) {
    for_each([&](Tensor<T>& t) {
      for (T& v : t.data) v = static_cast<T>(v * s);
    });
  }
};

// The F5C model: per-frame backbone (ConvStack -> FCC -> CCC) with shared
// weights, one of four input representations, and the temporal head.
template <typename T>
class F5CModel {
 public:
  F5CModel() = default;

  F5CModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(seed, "model-init"));
    stack_.init(cfg_.convstack_channels, rng);
    fcc_.init(cfg_.convstack_channels[3], rng);
    ccc_.init(cfg_.convstack_channels[3], cfg_.ccc_k, rng);
    head_.init(cfg_.convstack_channels[3], cfg_.embed_dim, cfg_.dropout, rng);
  }

  struct ClipCache {
    typename ConvStack<T>::Cache stack;
    typename Fcc<T>::Cache fcc;
    typename Ccc<T>::Cache ccc;
    typename TemporalHead<T>::Cache head;
    std::int64_t backbone_frames = 0;
    bool differenced = false;  // feat_diff routes head grads through the diff
  };

  const ModelConfig& config() const { return cfg_; }
  void set_half_compute(bool enabled) { half_ = enabled; }

  // --- stage operations -----------------------------------------------
  Tensor<T> convstack_forward(const Tensor<T>& frames, bool train = false) const {
    check_frames(frames);
    return stack_.forward(frames, train, nullptr, half_);
  }

  Tensor<T> fcc_forward(const Tensor<T>& maps) const { return fcc_.forward(maps, nullptr); }

  Tensor<T> ccc_forward(const Tensor<T>& maps) const { return ccc_.forward(maps, nullptr); }

  // clip: [F, 1, H, W] -> per-frame feature maps [F, C, h, w]
  Tensor<T> backbone_forward(const Tensor<T>& clip, bool train = false) const {
    return backbone_internal(clip, train, nullptr);
  }

  // Representation fed to the head for the configured condition.
  Tensor<T> condition_forward(const Tensor<T>& clip, bool train = false) const {
    return condition_internal(clip, train, nullptr);
  }

  Tensor<T> head_forward(const Tensor<T>& head_in, bool train = false,
                         std::uint64_t dropout_seed = 0) const {
    Rng rng(mix_seed(dropout_seed, "dropout"));
    return head_.forward(head_in, train, &rng, nullptr, half_);
  }

  // --- full pipeline ----------------------------------------------------
  Tensor<T> embed_clip(const Tensor<T>& clip, bool train = false,
                       std::uint64_t dropout_seed = 0, ClipCache* cache = nullptr) const {
    Tensor<T> head_in = condition_internal(clip, train, cache);
    Rng rng(mix_seed(dropout_seed, "dropout"));
    return head_.forward(head_in, train, &rng, cache ? &cache->head : nullptr, half_);
  }

  void backward_clip(const ClipCache& cache, const Tensor<T>& g_emb,
                     ModelGrads<T>& g) const {
    Tensor<T> g_head_in = head_.backward(cache.head, g_emb, g.head_w1, g.head_g1, g.head_b1,
                                         g.head_w2, g.head_g2, g.head_b2, g.fc1_w, g.fc1_b,
                                         g.fc2_w, g.fc2_b);
    Tensor<T> g_maps;
    if (cache.differenced) {
      // adjoint of d_t = f_{t+1} - f_t
      const std::int64_t frames = cache.backbone_frames;
      const std::int64_t per_frame = g_head_in.numel() / (frames - 1);
      g_maps = Tensor<T>({frames, g_head_in.dim(1), g_head_in.dim(2), g_head_in.dim(3)});
      g_maps.zero();
      for (std::int64_t t = 0; t + 1 < frames; ++t) {
        const T* gd = g_head_in.ptr() + t * per_frame;
        T* ga = g_maps.ptr() + t * per_frame;
        T* gb = g_maps.ptr() + (t + 1) * per_frame;
        for (std::int64_t i = 0; i < per_frame; ++i) {
          ga[i] -= gd[i];
          gb[i] += gd[i];
        }
      }
    } else {
      g_maps = g_head_in;
    }

    Tensor<T> g_fcc_out;
    ccc_.backward(cache.ccc, g_maps, &g_fcc_out, g.ccc_w);
    Tensor<T> g_stack_out;
    fcc_.backward(cache.fcc, g_fcc_out, &g_stack_out, g.fcc_h1, g.fcc_w1, g.fcc_w2, g.fcc_h2,
                  g.fcc_fw, g.fcc_fb);
    stack_.backward(cache.stack, std::move(g_stack_out), g.stack_w, g.stack_gamma,
                    g.stack_beta);
  }

  void fold_bn_stats(const ClipCache& cache) {
    for (int i = 0; i < 4; ++i) stack_.bn[i].fold_stats(cache.stack.bn[i]);
    head_.bn1.fold_stats(cache.head.b1);
    head_.bn2.fold_stats(cache.head.b2);
  }

  // --- parameter registry ------------------------------------------------
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    const char* stack_names[4][3] = {{"stack.conv1.w", "stack.bn1.gamma", "stack.bn1.beta"},
                                     {"stack.conv2.w", "stack.bn2.gamma", "stack.bn2.beta"},
                                     {"stack.conv3.w", "stack.bn3.gamma", "stack.bn3.beta"},
                                     {"stack.conv4.w", "stack.bn4.gamma", "stack.bn4.beta"}};
    for (int i = 0; i < 4; ++i) {
      fn(stack_names[i][0], stack_.conv[i].w);
      fn(stack_names[i][1], stack_.bn[i].gamma);
      fn(stack_names[i][2], stack_.bn[i].beta);
    }
    fn("fcc.h1", fcc_.h1);
    fn("fcc.w1", fcc_.w1);
    fn("fcc.w2", fcc_.w2);
    fn("fcc.h2", fcc_.h2);
    fn("fcc.fuse.w", fcc_.fuse_w);
    fn("fcc.fuse.b", fcc_.fuse_b);
    fn("ccc.w", ccc_.w);
    fn("head.conv1.w", head_.conv1.w);
    fn("head.bn1.gamma", head_.bn1.gamma);
    fn("head.bn1.beta", head_.bn1.beta);
    fn("head.conv2.w", head_.conv2.w);
    fn("head.bn2.gamma", head_.bn2.gamma);
    fn("head.bn2.beta", head_.bn2.beta);
    fn("head.fc1.w", head_.fc1.w);
    fn("head.fc1.b", head_.fc1.b);
    fn("head.fc2.w", head_.fc2.w);
    fn("head.fc2.b", head_.fc2.b);
  }

  template <typename Fn>
  void for_each_buffer(Fn&& fn) {
    const char* names[4][2] = {{"stack.bn1.rmean", "stack.bn1.rvar"},
                               {"stack.bn2.rmean", "stack.bn2.rvar"},
                               {"stack.bn3.rmean", "stack.bn3.rvar"},
                               {"stack.bn4.rmean", "stack.bn4.rvar"}};
    for (int i = 0; i < 4; ++i) {
      fn(names[i][0], stack_.bn[i].running_mean);
      fn(names[i][1], stack_.bn[i].running_var);
    }
    fn("head.bn1.rmean", head_.bn1.running_mean);
    fn("head.bn1.rvar", head_.bn1.running_var);
    fn("head.bn2.rmean", head_.bn2.running_mean);
    fn("head.bn2.rvar", head_.bn2.running_var);
  }

  struct ParamCounts {
    std::int64_t backbone = 0, head = 0, total = 0;
  };

  ParamCounts count_parameters() {
    ParamCounts pc;
    for_each_param([&](const std::string& name, Tensor<T>& t) {
      if (name.rfind("head.", 0) == 0)
        pc.head += t.numel();
      else
        pc.backbone += t.numel();
    });
    pc.total = pc.backbone + pc.head;
    return pc;
  }

  ConvStack<T> stack_;
  Fcc<T> fcc_;
  Ccc<T> ccc_;
  TemporalHead<T> head_;

 private:
  static void check_frames(const Tensor<T>& frames) {
    if (frames.ndim() != 4 || frames.dim(1) != 1)
      throw NumericError("expected frames shaped [F, 1, H, W]");
  }

  Tensor<T> backbone_internal(const Tensor<T>& clip, bool train, ClipCache* cache) const {
    check_frames(clip);
    Tensor<T> maps =
        stack_.forward(clip, train, cache ? &cache->stack : nullptr, half_);
    maps = fcc_.forward(maps, cache ? &cache->fcc : nullptr);
    round_to_half_inplace(maps, half_);
    maps = ccc_.forward(maps, cache ? &cache->ccc : nullptr);
    round_to_half_inplace(maps, half_);
    if (cache) cache->backbone_frames = maps.dim(0);
    return maps;
  }

  Tensor<T> condition_internal(const Tensor<T>& clip, bool train, ClipCache* cache) const {
    check_frames(clip);
    switch (cfg_.condition) {
      case Condition::feat_diff: {
        Tensor<T> maps = backbone_internal(clip, train, cache);
        if (cache) cache->differenced = true;
        return build_motion_tensor(maps);
      }
      case Condition::pixel_diff: {
        Tensor<T> diffs = build_motion_tensor(clip);
        return backbone_internal(diffs, train, cache);
      }
      case Condition::raw_feat:
        return backbone_internal(clip, train, cache);
      case Condition::static_frame: {
        // single center frame, temporal extent 1
        const std::int64_t f = clip.dim(0) / 2;
        Tensor<T> frame({1, 1, clip.dim(2), clip.dim(3)});
        const std::int64_t n = frame.numel();
        std::copy(clip.ptr() + f * n, clip.ptr() + (f + 1) * n, frame.ptr());
        return backbone_internal(frame, train, cache);
      }
    }
    throw ConfigError("unhandled condition");
  }

  ModelConfig cfg_;
  bool half_ = false;
};

template <typename T>
void ModelGrads<T>::init(const F5CModel<T>& model) {
  auto& m = const_cast<F5CModel<T>&>(model);
  std::vector<Tensor<T>*> mine;
  for_each([&](Tensor<T>& t) { mine.push_back(&t); });
  std::size_t idx = 0;
  m.for_each_param([&](const std::string&, Tensor<T>& p) {
    *mine[idx] = Tensor<T>(p.shape);
    mine[idx]->zero();
    ++idx;
  });
}

}  // namespace fingerdiff
