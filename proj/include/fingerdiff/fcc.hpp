#pragma once

#include "fingerdiff/errors.hpp"
#include "fingerdiff/nn.hpp"

namespace fingerdiff {

// Fully-connected convolution: the channel stack is split into two halves,
// one routed height-then-width, the other width-then-height, through
// per-channel 1-D global convolutions. Kernels are learnable meta-kernels of
// length 32, center-cropped to the runtime extent; the convolution wraps
// circularly so every position sees the whole row/column. Branch outputs are
// concatenated back to full width and fused by a 1x1 convolution.
template <typename T>
struct Fcc {
  static constexpr int kMetaLen = 32;

  int channels = 0;  // total, must be even
  Tensor<T> h1, w1;  // branch 1 (first half): H pass then W pass, [C/2, 32]
  Tensor<T> w2, h2;  // branch 2 (second half): W pass then H pass, [C/2, 32]
  Tensor<T> fuse_w;  // [C, C]
  Tensor<T> fuse_b;  // [C]

  void init(int channels_, Rng& rng) {
    if (channels_ % 2 != 0) throw ConfigError("fcc: channel count must be even");
    channels = channels_;
    const int half = channels / 2;
    for (Tensor<T>* t : {&h1, &w1, &w2, &h2}) {
      *t = Tensor<T>({half, kMetaLen});
      he_normal_init(*t, kMetaLen, rng);
    }
    fuse_w = Tensor<T>({channels, channels});
    fuse_b = Tensor<T>({channels});
    he_normal_init(fuse_w, channels, rng);
    fuse_b.zero();
  }

  struct Cache {
    Tensor<T> in;            // [F, C, H, W]
    Tensor<T> mid1, mid2;    // after the first pass of each branch [F, C/2, H, W]
    Tensor<T> concat;        // fuse input [F, C, H, W]
  };

  // Circular 1-D pass. kernel row has kMetaLen taps; the center `extent` taps
  // are active. along_h selects the direction. Row passes duplicate the row so
  // the wrapped reads stay contiguous.
  static void dpass_forward(const T* in, T* out, const T* kernel, int h, int w, bool along_h) {
    const int extent = along_h ? h : w;
    if (extent > kMetaLen) throw NumericError("fcc: spatial extent exceeds meta-kernel length");
    const int cs = (kMetaLen - extent) / 2;
    const int half_e = extent / 2;
    if (along_h) {
      for (int y = 0; y < h; ++y) {
        T* orow = out + y * w;
        std::fill(orow, orow + w, T(0));
        for (int j = 0; j < extent; ++j) {
          const int src = (y + j - half_e + extent) % extent;
          const T kj = kernel[cs + j];
          const T* irow = in + src * w;
          for (int x = 0; x < w; ++x) orow[x] += kj * irow[x];
        }
      }
    } else {
      T tmp[2 * kMetaLen];
      for (int y = 0; y < h; ++y) {
        const T* irow = in + y * w;
        std::copy(irow, irow + w, tmp);
        std::copy(irow, irow + w, tmp + w);
        T* orow = out + y * w;
        for (int x = 0; x < w; ++x) {
          const T* s = tmp + (x - half_e + w) % w;
          T acc = T(0);
          for (int j = 0; j < extent; ++j) acc += kernel[cs + j] * s[j];
          orow[x] = acc;
        }
      }
    }
  }

  static void dpass_backward(const T* in, const T* gout, const T* kernel, T* gin, T* gkernel,
                             int h, int w, bool along_h) {
    const int extent = along_h ? h : w;
    const int cs = (kMetaLen - extent) / 2;
    const int half_e = extent / 2;
    if (along_h) {
      for (int y = 0; y < h; ++y) {
        const T* grow = gout + y * w;
        for (int j = 0; j < extent; ++j) {
          const int src = (y + j - half_e + extent) % extent;
          const T kj = kernel[cs + j];
          T* girow = gin + src * w;
          const T* irow = in + src * w;
          T dot = T(0);
          for (int x = 0; x < w; ++x) {
            girow[x] += kj * grow[x];
            dot += irow[x] * grow[x];
          }
          gkernel[cs + j] += dot;
        }
      }
    } else {
      T tmp[2 * kMetaLen];
      T acc[2 * kMetaLen];
      for (int y = 0; y < h; ++y) {
        const T* irow = in + y * w;
        const T* grow = gout + y * w;
        std::copy(irow, irow + w, tmp);
        std::copy(irow, irow + w, tmp + w);
        std::fill(acc, acc + 2 * w, T(0));
        for (int x = 0; x < w; ++x) {
          const int start = (x - half_e + w) % w;
          const T g = grow[x];
          const T* s = tmp + start;
          T* a = acc + start;
          for (int j = 0; j < extent; ++j) {
            gkernel[cs + j] += s[j] * g;
            a[j] += kernel[cs + j] * g;
          }
        }
        T* girow = gin + y * w;
        for (int x = 0; x < w; ++x) girow[x] += acc[x] + acc[x + w];
      }
    }
  }

  // x: [F, C, H, W] -> same shape
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const std::int64_t frames = x.dim(0);
    const std::int64_t h = x.dim(2), w = x.dim(3);
    const std::int64_t hw = h * w;
    const int half = channels / 2;

    Tensor<T> mid1({frames, half, h, w}), mid2({frames, half, h, w});
    Tensor<T> concat({frames, channels, h, w});
    for (std::int64_t f = 0; f < frames; ++f)
      for (int c = 0; c < half; ++c) {
        const T* x1 = x.ptr() + (f * channels + c) * hw;
        const T* x2 = x.ptr() + (f * channels + half + c) * hw;
        T* m1 = mid1.ptr() + (f * half + c) * hw;
        T* m2 = mid2.ptr() + (f * half + c) * hw;
        T* o1 = concat.ptr() + (f * channels + c) * hw;
        T* o2 = concat.ptr() + (f * channels + half + c) * hw;
        dpass_forward(x1, m1, h1.ptr() + c * kMetaLen, static_cast<int>(h),
                      static_cast<int>(w), true);
        dpass_forward(m1, o1, w1.ptr() + c * kMetaLen, static_cast<int>(h),
                      static_cast<int>(w), false);
        dpass_forward(x2, m2, w2.ptr() + c * kMetaLen, static_cast<int>(h),
                      static_cast<int>(w), false);
        dpass_forward(m2, o2, h2.ptr() + c * kMetaLen, static_cast<int>(h),
                      static_cast<int>(w), true);
      }

    Tensor<T> y({frames, channels, h, w});
    ConstMatMap<T> wm(fuse_w.ptr(), channels, channels);
    for (std::int64_t f = 0; f < frames; ++f) {
      ConstMatMap<T> cm(concat.ptr() + f * channels * hw, channels, hw);
      MatMap<T> ym(y.ptr() + f * channels * hw, channels, hw);
      ym.noalias() = wm * cm;
      for (int c = 0; c < channels; ++c)
        ym.row(c).array() += static_cast<T>(fuse_b[c]);
    }

    if (cache) {
      cache->in = x;
      cache->mid1 = std::move(mid1);
      cache->mid2 = std::move(mid2);
      cache->concat = std::move(concat);
    }
    return y;
  }

  void backward(const Cache& cache, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& gh1,
                Tensor<T>& gw1, Tensor<T>& gw2, Tensor<T>& gh2, Tensor<T>& gfuse_w,
                Tensor<T>& gfuse_b) const {
    const std::int64_t frames = gy.dim(0);
    const std::int64_t h = gy.dim(2), w = gy.dim(3);
    const std::int64_t hw = h * w;
    const int half = channels / 2;

    Tensor<T> gconcat({frames, channels, h, w});
    ConstMatMap<T> wm(fuse_w.ptr(), channels, channels);
    MatMap<T> gwm(gfuse_w.ptr(), channels, channels);
    for (std::int64_t f = 0; f < frames; ++f) {
      ConstMatMap<T> gym(gy.ptr() + f * channels * hw, channels, hw);
      ConstMatMap<T> cm(cache.concat.ptr() + f * channels * hw, channels, hw);
      MatMap<T> gcm(gconcat.ptr() + f * channels * hw, channels, hw);
      gwm.noalias() += gym * cm.transpose();
      gcm.noalias() = wm.transpose() * gym;
      for (int c = 0; c < channels; ++c)
        gfuse_b[c] += static_cast<T>(gym.row(c).sum());
    }

    if (gx) {
      *gx = Tensor<T>({frames, channels, h, w});
      gx->zero();
    }
    Tensor<T> gmid({h, w});
    for (std::int64_t f = 0; f < frames; ++f)
      for (int c = 0; c < half; ++c) {
        // branch 1: x -> h1 -> mid1 -> w1 -> out ; branch 2: x -> w2 -> mid2 -> h2 -> out
        const T* m1 = cache.mid1.ptr() + (f * half + c) * hw;
        const T* m2 = cache.mid2.ptr() + (f * half + c) * hw;
        const T* x1 = cache.in.ptr() + (f * channels + c) * hw;
        const T* x2 = cache.in.ptr() + (f * channels + half + c) * hw;
        const T* go1 = gconcat.ptr() + (f * channels + c) * hw;
        const T* go2 = gconcat.ptr() + (f * channels + half + c) * hw;

        gmid.zero();
        dpass_backward(m1, go1, w1.ptr() + c * kMetaLen, gmid.ptr(),
                       gw1.ptr() + c * kMetaLen, static_cast<int>(h), static_cast<int>(w),
                       false);
        if (gx)
          dpass_backward(x1, gmid.ptr(), h1.ptr() + c * kMetaLen,
                         gx->ptr() + (f * channels + c) * hw, gh1.ptr() + c * kMetaLen,
                         static_cast<int>(h), static_cast<int>(w), true);
        else {
          Tensor<T> sink({h, w});
          dpass_backward(x1, gmid.ptr(), h1.ptr() + c * kMetaLen, sink.ptr(),
                         gh1.ptr() + c * kMetaLen, static_cast<int>(h), static_cast<int>(w),
                         true);
        }

        gmid.zero();
        dpass_backward(m2, go2, h2.ptr() + c * kMetaLen, gmid.ptr(),
                       gh2.ptr() + c * kMetaLen, static_cast<int>(h), static_cast<int>(w),
                       true);
        if (gx)
          dpass_backward(x2, gmid.ptr(), w2.ptr() + c * kMetaLen,
                         gx->ptr() + (f * channels + half + c) * hw,
                         gw2.ptr() + c * kMetaLen, static_cast<int>(h), static_cast<int>(w),
                         false);
        else {
          Tensor<T> sink({h, w});
          dpass_backward(x2, gmid.ptr(), w2.ptr() + c * kMetaLen, sink.ptr(),
                         gw2.ptr() + c * kMetaLen, static_cast<int>(h), static_cast<int>(w),
                         false);
        }
      }
  }
};

}  // namespace fingerdiff
