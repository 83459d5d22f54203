#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/error.hpp"
#include "mcld/nn.hpp"

namespace mcld {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Moment buffers are indexed like the
/// parameter store; frozen parameters keep zero moments and never move.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore<T>& store, AdamWConfig cfg) : cfg_(cfg), m_(store.zero_grads()), v_(store.zero_grads()) {}

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  std::vector<Mat<T>>& first_moment() { return m_; }
  std::vector<Mat<T>>& second_moment() { return v_; }
  const std::vector<Mat<T>>& first_moment() const { return m_; }
  const std::vector<Mat<T>>& second_moment() const { return v_; }

  /// Per-parameter multiplier on the learning rate (default 1).
  void set_lr_scale(const ParamStore<T>& store, const std::string& prefix, double scale) {
    lr_scale_.resize(static_cast<std::size_t>(store.size()), 1.0);
    for (int i = 0; i < store.size(); ++i)
      if (store.name(i).rfind(prefix, 0) == 0) lr_scale_[i] = scale;
  }

  void step(ParamStore<T>& store, const std::vector<Mat<T>>& grads) {
    require_shape(static_cast<int>(grads.size()) == store.size() && static_cast<int>(m_.size()) == store.size(),
                  "adamw: gradient list does not match the parameter store");
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.lr), wd = static_cast<T>(cfg_.weight_decay), eps = static_cast<T>(cfg_.eps);
    for (int i = 0; i < store.size(); ++i) {
      if (!store.trainable(i)) continue;
      Mat<T>& p = store.value(i);
      const Mat<T>& g = grads[i];
      const T lr_i = lr_scale_.empty() ? lr : static_cast<T>(cfg_.lr * lr_scale_[i]);
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseProduct(g);
      for (Eigen::Index j = 0; j < p.size(); ++j) {
        const T mh = m_[i].data()[j] / c1;
        const T vh = v_[i].data()[j] / c2;
        p.data()[j] -= lr_i * (mh / (std::sqrt(vh) + eps) + wd * p.data()[j]);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<Mat<T>> m_;
  std::vector<Mat<T>> v_;
  std::vector<double> lr_scale_;
  long t_ = 0;
};

/// Learning rate at `step` of `total`: constant, or cosine decay to zero.
inline double scheduled_lr(double base, const std::string& decay, long step, long total) {
  if (decay == "cosine" && total > 0) return 0.5 * base * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
  return base;
}

template <typename T>
double global_norm(const std::vector<Mat<T>>& grads) {
  double ss = 0.0;
  for (const auto& g : grads) ss += g.template cast<double>().squaredNorm();
  return std::sqrt(ss);
}

/// Rescales all gradients so their joint norm is at most max_norm. Returns
/// the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<Mat<T>>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (max_norm > 0.0 && n > max_norm) {
    const T s = static_cast<T>(max_norm / n);
    for (auto& g : grads) g *= s;
  }
  return n;
}

}  // namespace mcld
