#pragma once

#include <cmath>
#include <vector>

#include "tabforge/common.hpp"
#include "tabforge/tensor.hpp"

namespace tabforge::ad {

/// Adam with the standard defaults (beta1=0.9, beta2=0.999, eps=1e-8).
/// One optimizer instance owns the first/second moment buffers for a fixed
/// parameter list; step() consumes the gradients currently on the parameters.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr = 1e-3)
      : params_(std::move(params)), lr_(lr) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i]->value.size(), 0.0);
      v_[i].assign(params_[i]->value.size(), 0.0);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  long timestep() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      if (p.grad.size() != p.value.size() || m_[i].size() != p.value.size())
        throw ShapeMismatchError("adam_step: param/state size disagreement");
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        const double mh = m_[i][j] / bc1;
        const double vh = v_[i][j] / bc2;
        p.value[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_;
  long t_{0};
  static constexpr double beta1_ = 0.9;
  static constexpr double beta2_ = 0.999;
  static constexpr double eps_ = 1e-8;
};

}  // namespace tabforge::ad
