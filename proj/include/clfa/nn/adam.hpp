#pragma once
// adam.hpp - Adam with bias correction. Moment buffers are keyed by the
// parameter list order, which is fixed by model construction, and are
// exposed so checkpoints can carry optimizer state across a resume.

#include <cmath>
#include <vector>

#include "clfa/nn/tensor.hpp"

namespace clfa::nn {

class Adam {
 public:
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;

  explicit Adam(std::vector<Param*> params) : params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
      m_.push_back(Tensor::zeros(p->value.shape()));
      v_.push_back(Tensor::zeros(p->value.shape()));
    }
  }

  void step(Scalar lr) {
    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1, static_cast<Scalar>(t_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      auto g = p.grad.vec().array();
      m_[i].vec().array() = beta1 * m_[i].vec().array() + (1 - beta1) * g;
      v_[i].vec().array() = beta2 * v_[i].vec().array() + (1 - beta2) * g.square();
      p.value.vec().array() -=
          lr * (m_[i].vec().array() / bc1) / ((v_[i].vec().array() / bc2).sqrt() + eps);
    }
  }

  void zero_grads() {
    for (Param* p : params_) p->zero_grad();
  }

  // global-norm clip over all grads; returns the pre-clip norm
  Scalar clip_grad_norm(Scalar max_norm) {
    Scalar sq = 0;
    for (Param* p : params_) sq += p->grad.vec().squaredNorm();
    const Scalar norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
      const Scalar s = max_norm / norm;
      for (Param* p : params_) p->grad.vec() *= s;
    }
    return norm;
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  const std::vector<Param*>& params() const { return params_; }
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace clfa::nn
