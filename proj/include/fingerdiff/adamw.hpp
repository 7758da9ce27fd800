#pragma once

#include <cmath>
#include <vector>

#include "fingerdiff/model.hpp"

namespace fingerdiff {

// Clips the global gradient norm to max_norm; returns the pre-clip norm.
template <typename T>
double clip_global_norm(ModelGrads<T>& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

// Decoupled weight decay Adam. Moments kept in double regardless of the
// model's scalar type (master-weight style).
template <typename T>
class AdamW {
 public:
  explicit AdamW(F5CModel<T>& model, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : model_(&model), beta1_(beta1), beta2_(beta2), eps_(eps) {
    model.for_each_param([&](const std::string&, Tensor<T>& p) {
      params_.push_back(&p);
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    });
  }

  void step(ModelGrads<T>& grads, double lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t idx = 0;
    grads.for_each([&](Tensor<T>& g) {
      Tensor<T>& p = *params_[idx];
      std::vector<double>& m = m_[idx];
      std::vector<double>& v = v_[idx];
      for (std::int64_t i = 0; i < p.numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[static_cast<std::size_t>(i)] = beta1_ * m[static_cast<std::size_t>(i)] +
                                         (1.0 - beta1_) * gi;
        v[static_cast<std::size_t>(i)] = beta2_ * v[static_cast<std::size_t>(i)] +
                                         (1.0 - beta2_) * gi * gi;
        const double mhat = m[static_cast<std::size_t>(i)] / bc1;
        const double vhat = v[static_cast<std::size_t>(i)] / bc2;
        const double update = mhat / (std::sqrt(vhat) + eps_) +
                              weight_decay * static_cast<double>(p[i]);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * update);
      }
      ++idx;
    });
  }

  std::int64_t step_count() const { return t_; }

 private:
  F5CModel<T>* model_;
  std::vector<Tensor<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace fingerdiff
