#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hsfuse/tensor.hpp"

namespace hsfuse {

template <typename T>
struct ParamRef {
  Tensor<T>* value = nullptr;
  const Tensor<T>* grad = nullptr;
  // projected onto [0, inf) after every update (decoder weights, response
  // rows, blur kernel)
  bool nonneg = false;
};

// Adam with bias correction. Moment buffers are kept in the parameter
// precision so checkpoints round-trip exactly.
template <typename T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void init(const std::vector<ParamRef<T>>& params) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.value->data.size(), T(0));
      v_.emplace_back(p.value->data.size(), T(0));
    }
    t_ = 0;
  }

  void step(double lr, const std::vector<ParamRef<T>>& params) {
    check(params.size() == m_.size(), "adam: parameter list changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T ob1 = static_cast<T>(1.0 - beta1_), ob2 = static_cast<T>(1.0 - beta2_);
    const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
    const T step_lr = static_cast<T>(lr);
    const T eps = static_cast<T>(eps_);
    for (std::size_t p = 0; p < params.size(); ++p) {
      T* w = params[p].value->data.data();
      const T* g = params[p].grad->data.data();
      T* m = m_[p].data();
      T* v = v_[p].data();
      const std::size_t n = params[p].value->data.size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + ob1 * g[i];
        v[i] = b2 * v[i] + ob2 * g[i] * g[i];
        const T mh = m[i] * ibc1;
        const T vh = v[i] * ibc2;
        w[i] -= step_lr * mh / (std::sqrt(vh) + eps);
      }
      if (params[p].nonneg)
        for (std::size_t i = 0; i < n; ++i)
          if (w[i] < T(0)) w[i] = T(0);
    }
  }

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::vector<std::vector<T>>& m() { return m_; }
  std::vector<std::vector<T>>& v() { return v_; }
  const std::vector<std::vector<T>>& m() const { return m_; }
  const std::vector<std::vector<T>>& v() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace hsfuse
