#pragma once

#include <vector>

#include "fingerdiff/errors.hpp"
#include "fingerdiff/nn.hpp"

namespace fingerdiff {

// Channel correspondence convolution: a k-NN graph over spatial positions,
// with similarity measured between channel vectors (cosine, computed in
// double so ties are stable across scalar types). Each position aggregates
// the mean difference to its neighbors through a learned channel transform:
//   y(p) = x(p) + W * mean_n (x(n) - x(p))
// W carries no bias so that a graph with all-equal positions is an exact
// identity. Ties in similarity resolve to the smallest flattened index.
template <typename T>
struct Ccc {
  int channels = 0;
  int k = 4;
  Tensor<T> w;  // [C, C]

  void init(int channels_, int k_, Rng& rng) {
    channels = channels_;
    k = k_;
    w = Tensor<T>({channels, channels});
    he_normal_init(w, channels, rng);
  }

  struct Cache {
    std::vector<int> nbr;  // [F * P * k]
    Tensor<T> msg;         // [F, C, P]
    std::int64_t frames = 0, h = 0, wdt = 0;
  };

  // Cosine similarity between channel vectors of all position pairs; x laid
  // out [C][P] (row per channel). Zero-norm positions get similarity 0
  // toward/from everything.
  static std::vector<T> cosine_similarity(const T* x, int channels, int positions) {
    std::vector<T> xn(static_cast<std::size_t>(channels) * positions);
    for (int p = 0; p < positions; ++p) {
      double sq = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double v = static_cast<double>(x[static_cast<std::int64_t>(c) * positions + p]);
        sq += v * v;
      }
      const T inv = sq > 0.0 ? static_cast<T>(1.0 / std::sqrt(sq)) : T(0);
      for (int c = 0; c < channels; ++c)
        xn[static_cast<std::size_t>(c) * positions + p] =
            x[static_cast<std::int64_t>(c) * positions + p] * inv;
    }
    std::vector<T> sim(static_cast<std::size_t>(positions) * positions);
    ConstMatMap<T> xm(xn.data(), channels, positions);
    MatMap<T> sm(sim.data(), positions, positions);
    sm.noalias() = xm.transpose() * xm;
    return sim;
  }

  // Top-k neighbors per position from a [P][P] similarity matrix, excluding
  // self; equal similarities keep the smaller flattened index.
  static void knn_from_similarity(const std::vector<T>& sim, int positions, int k, int* out) {
    std::vector<std::pair<T, int>> best(static_cast<std::size_t>(k));
    for (int p = 0; p < positions; ++p) {
      int count = 0;
      for (int q = 0; q < positions; ++q) {
        if (q == p) continue;
        const T s = sim[static_cast<std::size_t>(p) * positions + q];
        if (count == k && !(s > best[static_cast<std::size_t>(k - 1)].first)) continue;
        // Sorted insert; the ascending q scan means an equal similarity never
        // displaces an earlier (smaller) index.
        int i = count < k ? count++ : k - 1;
        while (i > 0 && best[static_cast<std::size_t>(i - 1)].first < s) {
          best[static_cast<std::size_t>(i)] = best[static_cast<std::size_t>(i - 1)];
          --i;
        }
        best[static_cast<std::size_t>(i)] = {s, q};
      }
      for (int i = 0; i < k; ++i)
        out[static_cast<std::int64_t>(p) * k + i] = best[static_cast<std::size_t>(i)].second;
    }
  }

  static void knn_cosine(const T* x, int channels, int positions, int k, int* out) {
    knn_from_similarity(cosine_similarity(x, channels, positions), positions, k, out);
  }

  // x: [F, C, H, W] -> same shape
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const std::int64_t frames = x.dim(0);
    const std::int64_t h = x.dim(2), wdt = x.dim(3);
    const std::int64_t positions = h * wdt;
    if (k < 1 || k >= positions)
      throw ConfigError("ccc: k must satisfy 1 <= k < number of spatial positions");

    Tensor<T> y(x.shape);
    std::vector<int> nbr_local;
    std::vector<int>& nbr = cache ? cache->nbr : nbr_local;
    nbr.resize(static_cast<std::size_t>(frames * positions * k));
    Tensor<T> msg_local;
    Tensor<T>& msg = cache ? cache->msg : msg_local;
    msg = Tensor<T>({frames, channels, positions});
    if (cache) {
      cache->frames = frames;
      cache->h = h;
      cache->wdt = wdt;
    }

    ConstMatMap<T> wm(w.ptr(), channels, channels);
    const T inv_k = static_cast<T>(1.0 / k);
    for (std::int64_t f = 0; f < frames; ++f) {
      const T* xf = x.ptr() + f * channels * positions;
      int* nf = nbr.data() + f * positions * k;
      knn_cosine(xf, channels, static_cast<int>(positions), k, nf);

      T* mf = msg.ptr() + f * channels * positions;
      for (int c = 0; c < channels; ++c) {
        const T* xc = xf + static_cast<std::int64_t>(c) * positions;
        T* mc = mf + static_cast<std::int64_t>(c) * positions;
        for (std::int64_t p = 0; p < positions; ++p) {
          T acc = T(0);
          const int* np = nf + p * k;
          for (int i = 0; i < k; ++i) acc += xc[np[i]];
          mc[p] = acc * inv_k - xc[p];
        }
      }

      ConstMatMap<T> mm(mf, channels, positions);
      ConstMatMap<T> xm(xf, channels, positions);
      MatMap<T> ym(y.ptr() + f * channels * positions, channels, positions);
      ym.noalias() = xm + wm * mm;
    }
    return y;
  }

  void backward(const Cache& cache, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& gw) const {
    const std::int64_t frames = cache.frames;
    const std::int64_t positions = cache.h * cache.wdt;
    ConstMatMap<T> wm(w.ptr(), channels, channels);
    MatMap<T> gwm(gw.ptr(), channels, channels);
    const T inv_k = static_cast<T>(1.0 / k);

    if (gx) *gx = Tensor<T>(gy.shape);
    Tensor<T> gmsg({channels, positions});
    for (std::int64_t f = 0; f < frames; ++f) {
      ConstMatMap<T> gym(gy.ptr() + f * channels * positions, channels, positions);
      ConstMatMap<T> mm(cache.msg.ptr() + f * channels * positions, channels, positions);
      gwm.noalias() += gym * mm.transpose();

      if (!gx) continue;
      MatMap<T> gmm(gmsg.ptr(), channels, positions);
      gmm.noalias() = wm.transpose() * gym;

      T* gxf = gx->ptr() + f * channels * positions;
      const T* gyf = gy.ptr() + f * channels * positions;
      const int* nf = cache.nbr.data() + f * positions * k;
      for (int c = 0; c < channels; ++c) {
        const T* gmc = gmsg.ptr() + static_cast<std::int64_t>(c) * positions;
        const T* gyc = gyf + static_cast<std::int64_t>(c) * positions;
        T* gxc = gxf + static_cast<std::int64_t>(c) * positions;
        for (std::int64_t p = 0; p < positions; ++p) gxc[p] = gyc[p] - gmc[p];
        for (std::int64_t p = 0; p < positions; ++p) {
          const int* np = nf + p * k;
          const T g = gmc[p] * inv_k;
          for (int i = 0; i < k; ++i) gxc[np[i]] += g;
        }
      }
    }
  }
};

}  // namespace fingerdiff
