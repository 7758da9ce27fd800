#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fingerdiff/rng.hpp"
#include "fingerdiff/tensor.hpp"

// Layer primitives. Activations use the layout [frames][channels][H][W]; a
// clip's frames act as the normalization batch, so every clip is processed
// independently of the rest of the training batch.

namespace fingerdiff {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// fp16 emulation for the mixed_precision flag: forward activations are
// rounded to the nearest half-precision value while master weights and
// gradients stay in full precision.

inline float round_to_half(float x) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t sign = bits & 0x80000000u;
  const std::int32_t exp = static_cast<std::int32_t>((bits >> 23) & 0xff) - 127;
  std::uint32_t mant = bits & 0x007fffffu;

  std::uint16_t h;
  if (exp > 15) {
    h = 0x7c00;  // overflow -> inf
  } else if (exp >= -14) {
    // normal half; round mantissa to 10 bits, ties to even
    std::uint32_t m = mant >> 13;
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (m & 1u))) ++m;
    std::uint32_t e = static_cast<std::uint32_t>(exp + 15);
    if (m == 0x400u) {
      m = 0;
      ++e;
    }
    h = static_cast<std::uint16_t>((e << 10) | m);
    if (e >= 31) h = 0x7c00;
  } else if (exp >= -24) {
    // subnormal half
    mant |= 0x00800000u;
    const int shift = -exp - 14 + 13;
    std::uint32_t m = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t half_ulp = 1u << (shift - 1);
    if (rem > half_ulp || (rem == half_ulp && (m & 1u))) ++m;
    h = static_cast<std::uint16_t>(m);
  } else {
    h = 0;  // underflow
  }

  // half -> float
  const std::uint32_t he = (h >> 10) & 0x1f;
  const std::uint32_t hm = h & 0x3ff;
  std::uint32_t out;
  if (he == 0) {
    if (hm == 0) {
      out = sign;
    } else {
      int e = -1;
      std::uint32_t m = hm;
      do {
        ++e;
        m <<= 1;
      } while ((m & 0x400u) == 0);
      out = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((m & 0x3ffu) << 13);
    }
  } else if (he == 31) {
    out = sign | 0x7f800000u | (hm << 13);
  } else {
    out = sign | ((he + 127 - 15) << 23) | (hm << 13);
  }
  return std::bit_cast<float>(out);
}

template <typename T>
void round_to_half_inplace(Tensor<T>& t, bool enabled) {
  if (!enabled) return;
  for (auto& v : t.data) v = static_cast<T>(round_to_half(static_cast<float>(v)));
}

// ---------------------------------------------------------------------------

template <typename T>
void he_normal_init(Tensor<T>& w, std::int64_t fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, std_dev));
}

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// 2-D convolution over a stack of frames, no bias (normalization follows).
template <typename T>
struct Conv2d {
  int cin = 0, cout = 0, k = 0, stride = 1, pad = 0;
  Tensor<T> w;  // [cout, cin*k*k]

  void init(int cin_, int cout_, int k_, int stride_, int pad_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    pad = pad_;
    w = Tensor<T>({cout, static_cast<std::int64_t>(cin) * k * k});
    he_normal_init(w, static_cast<std::int64_t>(cin) * k * k, rng);
  }

  struct Cache {
    Tensor<T> cols;  // [F, cin*k*k, ho*wo]
    int hin = 0, win = 0, ho = 0, wo = 0;
  };

  void im2col_frame(const T* x, T* cols, int hin, int win, int ho, int wo) const {
    std::int64_t row = 0;
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          T* dst = cols + row * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[oy * wo + ox] = (iy >= 0 && iy < hin && ix >= 0 && ix < win)
                                      ? x[(static_cast<std::int64_t>(c) * hin + iy) * win + ix]
                                      : T(0);
            }
          }
        }
  }

  void col2im_frame(const T* gcols, T* gx, int hin, int win, int ho, int wo) const {
    std::int64_t row = 0;
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          const T* src = gcols + row * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= hin) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < win)
                gx[(static_cast<std::int64_t>(c) * hin + iy) * win + ix] += src[oy * wo + ox];
            }
          }
        }
  }

  // x: [F, cin, hin, win] -> [F, cout, ho, wo]
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const int frames = static_cast<int>(x.dim(0));
    const int hin = static_cast<int>(x.dim(2));
    const int win = static_cast<int>(x.dim(3));
    const int ho = conv_out_extent(hin, k, stride, pad);
    const int wo = conv_out_extent(win, k, stride, pad);
    const std::int64_t kk = static_cast<std::int64_t>(cin) * k * k;
    const std::int64_t spatial = static_cast<std::int64_t>(ho) * wo;

    Tensor<T> cols_local;
    Tensor<T>& cols = cache ? cache->cols : cols_local;
    cols = Tensor<T>({frames, kk, spatial});
    if (cache) {
      cache->hin = hin;
      cache->win = win;
      cache->ho = ho;
      cache->wo = wo;
    }

    Tensor<T> y({frames, cout, static_cast<std::int64_t>(ho), static_cast<std::int64_t>(wo)});
    ConstMatMap<T> wm(w.ptr(), cout, kk);
    for (int f = 0; f < frames; ++f) {
      T* cf = cols.ptr() + static_cast<std::int64_t>(f) * kk * spatial;
      im2col_frame(x.ptr() + static_cast<std::int64_t>(f) * cin * hin * win, cf, hin, win, ho,
                   wo);
      MatMap<T> ym(y.ptr() + static_cast<std::int64_t>(f) * cout * spatial, cout, spatial);
      ConstMatMap<T> cm(cf, kk, spatial);
      ym.noalias() = wm * cm;
    }
    return y;
  }

  void backward(const Cache& cache, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& gw) const {
    const int frames = static_cast<int>(gy.dim(0));
    const std::int64_t kk = static_cast<std::int64_t>(cin) * k * k;
    const std::int64_t spatial = static_cast<std::int64_t>(cache.ho) * cache.wo;

    if (gx) {
      *gx = Tensor<T>({frames, cin, static_cast<std::int64_t>(cache.hin),
                       static_cast<std::int64_t>(cache.win)});
      gx->zero();
    }
    MatMap<T> gwm(gw.ptr(), cout, kk);
    ConstMatMap<T> wm(w.ptr(), cout, kk);
    Tensor<T> gcols({kk, spatial});
    for (int f = 0; f < frames; ++f) {
      ConstMatMap<T> gym(gy.ptr() + static_cast<std::int64_t>(f) * cout * spatial, cout,
                         spatial);
      ConstMatMap<T> cm(cache.cols.ptr() + static_cast<std::int64_t>(f) * kk * spatial, kk,
                        spatial);
      gwm.noalias() += gym * cm.transpose();
      if (gx) {
        MatMap<T> gcm(gcols.ptr(), kk, spatial);
        gcm.noalias() = wm.transpose() * gym;
        col2im_frame(gcols.ptr(),
                     gx->ptr() + static_cast<std::int64_t>(f) * cin * cache.hin * cache.win,
                     cache.hin, cache.win, cache.ho, cache.wo);
      }
    }
  }
};

// Normalizes per channel over (frames, spatial) of one clip. Batch statistics
// in train mode; running averages in eval mode. Running stats are folded in
// by the trainer in clip order, never mutated inside forward.
template <typename T>
struct BatchNorm {
  int channels = 0;
  double momentum = 0.1;
  double eps = 1e-5;
  Tensor<T> gamma, beta;              // learned
  Tensor<T> running_mean, running_var;  // buffers

  void init(int channels_) {
    channels = channels_;
    gamma = Tensor<T>({channels});
    beta = Tensor<T>({channels});
    running_mean = Tensor<T>({channels});
    running_var = Tensor<T>({channels});
    std::fill(gamma.data.begin(), gamma.data.end(), T(1));
    beta.zero();
    running_mean.zero();
    std::fill(running_var.data.begin(), running_var.data.end(), T(1));
  }

  struct Cache {
    Tensor<T> xhat;
    std::vector<T> mean, var, istd;
  };

  // x: [F, C, S]; shape is interpreted as (frames, channels, flattened rest).
  Tensor<T> forward(const Tensor<T>& x, bool train, Cache* cache) const {
    const std::int64_t frames = x.dim(0);
    const std::int64_t spatial = x.numel() / (frames * channels);
    Tensor<T> y(x.shape);

    std::vector<T> mean(static_cast<std::size_t>(channels)),
        var(static_cast<std::size_t>(channels)), istd(static_cast<std::size_t>(channels));
    if (train) {
      const double n = static_cast<double>(frames * spatial);
      for (int c = 0; c < channels; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::int64_t f = 0; f < frames; ++f) {
          const T* px = x.ptr() + (f * channels + c) * spatial;
          for (std::int64_t s = 0; s < spatial; ++s) {
            sum += static_cast<double>(px[s]);
            sum_sq += static_cast<double>(px[s]) * px[s];
          }
        }
        const double m = sum / n;
        const double v = std::max(0.0, sum_sq / n - m * m);
        mean[static_cast<std::size_t>(c)] = static_cast<T>(m);
        var[static_cast<std::size_t>(c)] = static_cast<T>(v);
        istd[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(v + eps));
      }
    } else {
      for (int c = 0; c < channels; ++c) {
        mean[static_cast<std::size_t>(c)] = running_mean[c];
        var[static_cast<std::size_t>(c)] = running_var[c];
        istd[static_cast<std::size_t>(c)] =
            static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
      }
    }

    if (cache) {
      cache->xhat = Tensor<T>(x.shape);
      cache->mean = mean;
      cache->var = var;
      cache->istd = istd;
    }
    for (std::int64_t f = 0; f < frames; ++f)
      for (int c = 0; c < channels; ++c) {
        const T* px = x.ptr() + (f * channels + c) * spatial;
        T* py = y.ptr() + (f * channels + c) * spatial;
        T* ph = cache ? cache->xhat.ptr() + (f * channels + c) * spatial : nullptr;
        const T m = mean[static_cast<std::size_t>(c)];
        const T is = istd[static_cast<std::size_t>(c)];
        const T g = gamma[c];
        const T b = beta[c];
        for (std::int64_t s = 0; s < spatial; ++s) {
          const T xh = (px[s] - m) * is;
          if (ph) ph[s] = xh;
          py[s] = g * xh + b;
        }
      }
    return y;
  }

  void backward(const Cache& cache, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& ggamma,
                Tensor<T>& gbeta) const {
    const std::int64_t frames = gy.dim(0);
    const std::int64_t spatial = gy.numel() / (frames * channels);
    const double n = static_cast<double>(frames * spatial);
    if (gx) *gx = Tensor<T>(gy.shape);

    for (int c = 0; c < channels; ++c) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (std::int64_t f = 0; f < frames; ++f) {
        const T* pg = gy.ptr() + (f * channels + c) * spatial;
        const T* ph = cache.xhat.ptr() + (f * channels + c) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          sum_gy += static_cast<double>(pg[s]);
          sum_gy_xhat += static_cast<double>(pg[s]) * ph[s];
        }
      }
      ggamma[c] += static_cast<T>(sum_gy_xhat);
      gbeta[c] += static_cast<T>(sum_gy);
      if (gx) {
        const double g_istd = static_cast<double>(gamma[c]) *
                              static_cast<double>(cache.istd[static_cast<std::size_t>(c)]);
        for (std::int64_t f = 0; f < frames; ++f) {
          const T* pg = gy.ptr() + (f * channels + c) * spatial;
          const T* ph = cache.xhat.ptr() + (f * channels + c) * spatial;
          T* px = gx->ptr() + (f * channels + c) * spatial;
          for (std::int64_t s = 0; s < spatial; ++s)
            px[s] = static_cast<T>(
                g_istd * (static_cast<double>(pg[s]) -
                          (sum_gy + static_cast<double>(ph[s]) * sum_gy_xhat) / n));
        }
      }
    }
  }

  void fold_stats(const Cache& cache) {
    for (int c = 0; c < channels; ++c) {
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] +
                                       momentum * cache.mean[static_cast<std::size_t>(c)]);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] +
                                      momentum * cache.var[static_cast<std::size_t>(c)]);
    }
  }
};

template <typename T>
void relu_forward_inplace(Tensor<T>& x, std::vector<std::uint8_t>* mask) {
  if (mask) mask->resize(static_cast<std::size_t>(x.numel()));
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const bool pos = x[i] > T(0);
    if (mask) (*mask)[static_cast<std::size_t>(i)] = pos;
    if (!pos) x[i] = T(0);
  }
}

template <typename T>
void relu_backward_inplace(Tensor<T>& g, const std::vector<std::uint8_t>& mask) {
  for (std::int64_t i = 0; i < g.numel(); ++i)
    if (!mask[static_cast<std::size_t>(i)]) g[i] = T(0);
}

// 3-D convolution, kernel 3x3x3, padding 1 on every axis, strides
// (temporal, H, W) = (1, 2, 1). No bias.
template <typename T>
struct Conv3d {
  int cin = 0, cout = 0;
  static constexpr int kK = 3;
  static constexpr int kStrideH = 2;
  Tensor<T> w;  // [kt, cout, cin*9]

  void init(int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    w = Tensor<T>({kK, cout, static_cast<std::int64_t>(cin) * kK * kK});
    he_normal_init(w, static_cast<std::int64_t>(cin) * kK * kK * kK, rng);
  }

  struct Cache {
    Tensor<T> cols;  // [Tt, cin*9, ho*wo]
    int h = 0, wdt = 0, ho = 0, wo = 0, frames = 0;
  };

  void im2col_spatial(const T* x, T* cols, int h, int wdt, int ho, int wo) const {
    std::int64_t row = 0;
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < kK; ++ky)
        for (int kx = 0; kx < kK; ++kx, ++row) {
          T* dst = cols + row * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * kStrideH - 1 + ky;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox - 1 + kx;
              dst[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < wdt)
                                      ? x[(static_cast<std::int64_t>(c) * h + iy) * wdt + ix]
                                      : T(0);
            }
          }
        }
  }

  void col2im_spatial(const T* gcols, T* gx, int h, int wdt, int ho, int wo) const {
    std::int64_t row = 0;
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < kK; ++ky)
        for (int kx = 0; kx < kK; ++kx, ++row) {
          const T* src = gcols + row * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * kStrideH - 1 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox - 1 + kx;
              if (ix >= 0 && ix < wdt)
                gx[(static_cast<std::int64_t>(c) * h + iy) * wdt + ix] += src[oy * wo + ox];
            }
          }
        }
  }

  // x: [Tt, cin, h, w] -> [Tt, cout, h/2, w]
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const int frames = static_cast<int>(x.dim(0));
    const int h = static_cast<int>(x.dim(2));
    const int wdt = static_cast<int>(x.dim(3));
    const int ho = conv_out_extent(h, kK, kStrideH, 1);
    const int wo = conv_out_extent(wdt, kK, 1, 1);
    const std::int64_t kk = static_cast<std::int64_t>(cin) * kK * kK;
    const std::int64_t spatial = static_cast<std::int64_t>(ho) * wo;

    Tensor<T> cols_local;
    Tensor<T>& cols = cache ? cache->cols : cols_local;
    cols = Tensor<T>({frames, kk, spatial});
    if (cache) {
      cache->h = h;
      cache->wdt = wdt;
      cache->ho = ho;
      cache->wo = wo;
      cache->frames = frames;
    }
    for (int f = 0; f < frames; ++f)
      im2col_spatial(x.ptr() + static_cast<std::int64_t>(f) * cin * h * wdt,
                     cols.ptr() + static_cast<std::int64_t>(f) * kk * spatial, h, wdt, ho, wo);

    Tensor<T> y({frames, cout, static_cast<std::int64_t>(ho), static_cast<std::int64_t>(wo)});
    y.zero();
    for (int fo = 0; fo < frames; ++fo) {
      MatMap<T> ym(y.ptr() + static_cast<std::int64_t>(fo) * cout * spatial, cout, spatial);
      for (int kt = 0; kt < kK; ++kt) {
        const int fi = fo + kt - 1;
        if (fi < 0 || fi >= frames) continue;
        ConstMatMap<T> wm(w.ptr() + static_cast<std::int64_t>(kt) * cout * kk, cout, kk);
        ConstMatMap<T> cm(cols.ptr() + static_cast<std::int64_t>(fi) * kk * spatial, kk,
                          spatial);
        ym.noalias() += wm * cm;
      }
    }
    return y;
  }

  void backward(const Cache& cache, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& gw) const {
    const int frames = cache.frames;
    const std::int64_t kk = static_cast<std::int64_t>(cin) * kK * kK;
    const std::int64_t spatial = static_cast<std::int64_t>(cache.ho) * cache.wo;

    for (int kt = 0; kt < kK; ++kt) {
      MatMap<T> gwm(gw.ptr() + static_cast<std::int64_t>(kt) * cout * kk, cout, kk);
      for (int fo = 0; fo < frames; ++fo) {
        const int fi = fo + kt - 1;
        if (fi < 0 || fi >= frames) continue;
        ConstMatMap<T> gym(gy.ptr() + static_cast<std::int64_t>(fo) * cout * spatial, cout,
                           spatial);
        ConstMatMap<T> cm(cache.cols.ptr() + static_cast<std::int64_t>(fi) * kk * spatial, kk,
                          spatial);
        gwm.noalias() += gym * cm.transpose();
      }
    }

    if (gx) {
      *gx = Tensor<T>({frames, cin, static_cast<std::int64_t>(cache.h),
                       static_cast<std::int64_t>(cache.wdt)});
      gx->zero();
      Tensor<T> gcols({kk, spatial});
      for (int fi = 0; fi < frames; ++fi) {
        MatMap<T> gcm(gcols.ptr(), kk, spatial);
        gcm.setZero();
        for (int kt = 0; kt < kK; ++kt) {
          const int fo = fi + 1 - kt;
          if (fo < 0 || fo >= frames) continue;
          ConstMatMap<T> wm(w.ptr() + static_cast<std::int64_t>(kt) * cout * kk, cout, kk);
          ConstMatMap<T> gym(gy.ptr() + static_cast<std::int64_t>(fo) * cout * spatial, cout,
                             spatial);
          gcm.noalias() += wm.transpose() * gym;
        }
        col2im_spatial(gcols.ptr(),
                       gx->ptr() + static_cast<std::int64_t>(fi) * cin * cache.h * cache.wdt,
                       cache.h, cache.wdt, cache.ho, cache.wo);
      }
    }
  }
};

// Adaptive average pooling: spatial dims to (oh, ow), temporal axis collapsed.
// x: [Tt, C, H, W] -> [C, oh, ow]
template <typename T>
struct AdaptivePool {
  int oh = 4, ow = 4;

  struct Cache {
    int frames = 0, c = 0, h = 0, w = 0;
  };

  static std::int64_t bin_start(int i, int in, int out) {
    return (static_cast<std::int64_t>(i) * in) / out;
  }
  static std::int64_t bin_end(int i, int in, int out) {
    return (static_cast<std::int64_t>(i + 1) * in + out - 1) / out;
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const int frames = static_cast<int>(x.dim(0));
    const int c = static_cast<int>(x.dim(1));
    const int h = static_cast<int>(x.dim(2));
    const int w = static_cast<int>(x.dim(3));
    if (cache) *cache = {frames, c, h, w};

    Tensor<T> y({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const std::int64_t h0 = bin_start(i, h, oh), h1 = bin_end(i, h, oh);
          const std::int64_t w0 = bin_start(j, w, ow), w1 = bin_end(j, w, ow);
          double acc = 0.0;
          for (int f = 0; f < frames; ++f)
            for (std::int64_t yy = h0; yy < h1; ++yy)
              for (std::int64_t xx = w0; xx < w1; ++xx)
                acc += static_cast<double>(
                    x.ptr()[((static_cast<std::int64_t>(f) * c + ch) * h + yy) * w + xx]);
          const double count = static_cast<double>(frames) * (h1 - h0) * (w1 - w0);
          y.ptr()[(static_cast<std::int64_t>(ch) * oh + i) * ow + j] =
              static_cast<T>(acc / count);
        }
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& gy) const {
    Tensor<T> gx({cache.frames, cache.c, cache.h, cache.w});
    gx.zero();
    for (int ch = 0; ch < cache.c; ++ch)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const std::int64_t h0 = bin_start(i, cache.h, oh), h1 = bin_end(i, cache.h, oh);
          const std::int64_t w0 = bin_start(j, cache.w, ow), w1 = bin_end(j, cache.w, ow);
          const double count = static_cast<double>(cache.frames) * (h1 - h0) * (w1 - w0);
          const T g = static_cast<T>(
              static_cast<double>(
                  gy.ptr()[(static_cast<std::int64_t>(ch) * oh + i) * ow + j]) /
              count);
          for (int f = 0; f < cache.frames; ++f)
            for (std::int64_t yy = h0; yy < h1; ++yy)
              for (std::int64_t xx = w0; xx < w1; ++xx)
                gx.ptr()[((static_cast<std::int64_t>(f) * cache.c + ch) * cache.h + yy) *
                             cache.w +
                         xx] += g;
        }
    return gx;
  }
};

template <typename T>
struct Linear {
  int in = 0, out = 0;
  Tensor<T> w;  // [out, in]
  Tensor<T> b;  // [out]

  void init(int in_, int out_, Rng& rng) {
    in = in_;
    out = out_;
    w = Tensor<T>({out, in});
    b = Tensor<T>({out});
    he_normal_init(w, in, rng);
    b.zero();
  }

  struct Cache {
    Tensor<T> x;
  };

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    if (cache) cache->x = x;
    Tensor<T> y({out});
    ConstMatMap<T> wm(w.ptr(), out, in);
    Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> xv(x.ptr(), in);
    Eigen::Map<Eigen::Vector<T, Eigen::Dynamic>> yv(y.ptr(), out);
    yv.noalias() = wm * xv;
    for (int i = 0; i < out; ++i) y[i] += b[i];
    return y;
  }

  void backward(const Cache& cache, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& gw,
                Tensor<T>& gb) const {
    MatMap<T> gwm(gw.ptr(), out, in);
    Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> gyv(gy.ptr(), out);
    Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> xv(cache.x.ptr(), in);
    gwm.noalias() += gyv * xv.transpose();
    for (int i = 0; i < out; ++i) gb[i] += gy[i];
    if (gx) {
      *gx = Tensor<T>({in});
      ConstMatMap<T> wm(w.ptr(), out, in);
      Eigen::Map<Eigen::Vector<T, Eigen::Dynamic>> gxv(gx->ptr(), in);
      gxv.noalias() = wm.transpose() * gyv;
    }
  }
};

// Inverted dropout; identity in eval mode.
template <typename T>
struct Dropout {
  double p = 0.3;

  struct Cache {
    std::vector<std::uint8_t> keep;
    bool active = false;
  };

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng* rng, Cache* cache) const {
    if (!train || p <= 0.0) {
      if (cache) cache->active = false;
      return x;
    }
    Tensor<T> y(x.shape);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    if (cache) {
      cache->active = true;
      cache->keep.resize(static_cast<std::size_t>(x.numel()));
    }
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const bool keep = rng->uniform01() >= p;
      if (cache) cache->keep[static_cast<std::size_t>(i)] = keep;
      y[i] = keep ? x[i] * scale : T(0);
    }
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& gy) const {
    if (!cache.active) return gy;
    Tensor<T> gx(gy.shape);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::int64_t i = 0; i < gy.numel(); ++i)
      gx[i] = cache.keep[static_cast<std::size_t>(i)] ? gy[i] * scale : T(0);
    return gx;
  }
};

template <typename T>
struct L2NormCache {
  Tensor<T> y;
  T inv_norm = T(0);
};

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, L2NormCache<T>* cache) {
  double sq = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) sq += static_cast<double>(x[i]) * x[i];
  const double norm = std::sqrt(std::max(sq, 1e-24));
  Tensor<T> y(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = static_cast<T>(x[i] / norm);
  if (cache) {
    cache->y = y;
    cache->inv_norm = static_cast<T>(1.0 / norm);
  }
  return y;
}

template <typename T>
Tensor<T> l2_normalize_backward(const L2NormCache<T>& cache, const Tensor<T>& gy) {
  double dot = 0.0;
  for (std::int64_t i = 0; i < gy.numel(); ++i)
    dot += static_cast<double>(gy[i]) * cache.y[i];
  Tensor<T> gx(gy.shape);
  for (std::int64_t i = 0; i < gy.numel(); ++i)
    gx[i] = static_cast<T>((static_cast<double>(gy[i]) - dot * cache.y[i]) * cache.inv_norm);
  return gx;
}

}  // namespace fingerdiff
