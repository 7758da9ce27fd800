#pragma once

#include <cmath>
#include <vector>

#include "fingerdiff/errors.hpp"
#include "fingerdiff/tensor.hpp"

namespace fingerdiff {

enum class Reduction { mean, sum };

struct SupConConfig {
  double temperature = 0.07;
  // The anchor sum in the loss definition carries no 1/B; both reductions are
  // exposed and training defaults to mean.
  Reduction reduction = Reduction::mean;
};

// Supervised contrastive loss over driver labels:
//   L_i = (-1/|P(i)|) sum_{p in P(i)} log( exp(z_ip) / sum_{a != i} exp(z_ia) )
// with z_ab = emb_a . emb_b / tau. Anchors without positives are skipped; if
// no anchor has a positive the batch is rejected. Computed with per-anchor
// max-logit subtraction. Optionally accumulates d(loss)/d(embeddings).
template <typename T>
double supcon_loss(const Tensor<T>& emb, const std::vector<int>& labels,
                   const SupConConfig& cfg, Tensor<T>* grad = nullptr) {
  if (cfg.temperature <= 0.0) throw ConfigError("supcon: temperature must be > 0");
  if (emb.ndim() != 2) throw NumericError("supcon: embeddings must be [B, D]");
  const std::int64_t b = emb.dim(0);
  const std::int64_t d = emb.dim(1);
  if (b < 2) throw NumericError("supcon: batch must have B >= 2");
  if (static_cast<std::int64_t>(labels.size()) != b)
    throw NumericError("supcon: labels/embeddings size mismatch");

  const double inv_tau = 1.0 / cfg.temperature;
  // z in double regardless of T; the loss itself is cheap next to the model.
  std::vector<double> z(static_cast<std::size_t>(b * b), 0.0);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = i + 1; j < b; ++j) {
      double dot = 0.0;
      for (std::int64_t k = 0; k < d; ++k)
        dot += static_cast<double>(emb[i * d + k]) * static_cast<double>(emb[j * d + k]);
      const double v = dot * inv_tau;
      z[static_cast<std::size_t>(i * b + j)] = v;
      z[static_cast<std::size_t>(j * b + i)] = v;
    }

  if (grad) {
    *grad = Tensor<T>({b, d});
    grad->zero();
  }

  double loss = 0.0;
  std::int64_t anchors_with_positives = 0;
  std::vector<double> coeff(static_cast<std::size_t>(b * b), 0.0);  // dL/dz (pre-reduction)

  for (std::int64_t i = 0; i < b; ++i) {
    std::int64_t n_pos = 0;
    for (std::int64_t a = 0; a < b; ++a)
      if (a != i && labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)])
        ++n_pos;
    if (n_pos == 0) continue;
    ++anchors_with_positives;

    double zmax = -1e300;
    for (std::int64_t a = 0; a < b; ++a)
      if (a != i) zmax = std::max(zmax, z[static_cast<std::size_t>(i * b + a)]);
    double denom = 0.0;
    for (std::int64_t a = 0; a < b; ++a)
      if (a != i) denom += std::exp(z[static_cast<std::size_t>(i * b + a)] - zmax);
    const double lse = zmax + std::log(denom);

    const double inv_npos = 1.0 / static_cast<double>(n_pos);
    for (std::int64_t a = 0; a < b; ++a) {
      if (a == i) continue;
      const double soft = std::exp(z[static_cast<std::size_t>(i * b + a)] - lse);
      double c = soft;  // from the log-sum-exp, once per positive => times 1 after /|P|
      if (labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)]) {
        loss += inv_npos * (lse - z[static_cast<std::size_t>(i * b + a)]);
        c -= inv_npos;
      }
      coeff[static_cast<std::size_t>(i * b + a)] = c;
    }
  }

  if (anchors_with_positives == 0)
    throw NumericError("supcon: no positive pairs in batch");

  const double red =
      cfg.reduction == Reduction::mean ? 1.0 / static_cast<double>(anchors_with_positives)
                                       : 1.0;
  loss *= red;

  if (grad) {
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t a = 0; a < b; ++a) {
        const double c = coeff[static_cast<std::size_t>(i * b + a)] * red * inv_tau;
        if (c == 0.0) continue;
        for (std::int64_t k = 0; k < d; ++k) {
          (*grad)[i * d + k] += static_cast<T>(c * static_cast<double>(emb[a * d + k]));
          (*grad)[a * d + k] += static_cast<T>(c * static_cast<double>(emb[i * d + k]));
        }
      }
  }
  return loss;
}

// Max relative deviation between the analytic gradient and central finite
// differences (double precision, step 1e-5). Denominator floored at 1e-8 so a
// stationary batch degenerates to an absolute tolerance.
inline double supcon_grad_check(const Tensor<double>& emb, const std::vector<int>& labels,
                                const SupConConfig& cfg) {
  Tensor<double> analytic;
  supcon_loss(emb, labels, cfg, &analytic);

  const double h = 1e-5;
  Tensor<double> work = emb;
  double worst = 0.0;
  for (std::int64_t i = 0; i < emb.numel(); ++i) {
    const double saved = work[i];
    work[i] = saved + h;
    const double lp = supcon_loss(work, labels, cfg);
    work[i] = saved - h;
    const double lm = supcon_loss(work, labels, cfg);
    work[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace fingerdiff
