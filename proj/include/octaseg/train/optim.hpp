// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "octaseg/core/autodiff.hpp"
#include "octaseg/core/config.hpp"

namespace octaseg {

/// AdamW over every parameter in a registry, in registration order. Weight
/// decay is decoupled (applied to the value, not the gradient) and uniform
/// across parameters.
template <typename T>
class AdamW {
 public:
  AdamW(ParamRegistry<T>& reg, const TrainConfig& tc)
      : reg_(reg),
        wd_(tc.weight_decay),
        b1_(tc.beta1),
        b2_(tc.beta2),
        eps_(tc.adam_eps) {
    for (const auto& e : reg.entries()) {
      m_.push_back(Tensor<T>::zeros(e.var.shape()));
      v_.push_back(Tensor<T>::zeros(e.var.shape()));
    }
  }

  void step(double lr) {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const auto& entries = reg_.entries();
    for (size_t k = 0; k < entries.size(); ++k) {
      auto& val = entries[k].var.node()->value;
      const auto& grad = entries[k].var.node()->grad;
      if (!grad.numel()) continue;  // parameter untouched by this graph
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (long i = 0; i < val.numel(); ++i) {
        double g = static_cast<double>(grad[i]);
        double mi = b1_ * static_cast<double>(m[i]) + (1.0 - b1_) * g;
        double vi = b2_ * static_cast<double>(v[i]) + (1.0 - b2_) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double update = (mi / c1) / (std::sqrt(vi / c2) + eps_);
        val[i] = static_cast<T>(static_cast<double>(val[i]) -
                                lr * (update + wd_ * static_cast<double>(val[i])));
      }
    }
  }

  long steps() const { return t_; }

 private:
  ParamRegistry<T>& reg_;
  double wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace octaseg
