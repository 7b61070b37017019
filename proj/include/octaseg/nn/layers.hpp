// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "octaseg/core/autodiff.hpp"
#include "octaseg/core/image_ops.hpp"
#include "octaseg/core/ops.hpp"
#include "octaseg/core/rng.hpp"

namespace octaseg {

// Parameter-holding layer wrappers. Weights are Kaiming-uniform, biases zero,
// unless a layer is documented to start as zero (identity residuals).

struct ConvSpec {
  long stride = 1, ph = 0, pw = 0, dh = 1, dw = 1, groups = 1;
  bool zero_init = false;
};

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long cout,
              long cin, long kh, long kw, ConvSpec s = {})
      : spec_(s) {
    require(cin % s.groups == 0 && cout % s.groups == 0, ErrorCode::BadChannels,
            name + ": channels not divisible by groups");
    Shape ws{cout, cin / s.groups, kh, kw};
    long fan_in = (cin / s.groups) * kh * kw;
    Tensor<T> w = s.zero_init ? Tensor<T>::zeros(ws) : kaiming_uniform<T>(rng, ws, fan_in);
    w_ = reg.add(name + ".w", std::move(w));
    b_ = reg.add(name + ".b", Tensor<T>::zeros(Shape{cout}));
  }

  Var<T> operator()(const Var<T>& x) const {
    return conv2d(x, w_, b_, spec_.stride, spec_.ph, spec_.pw, spec_.dh, spec_.dw,
                  spec_.groups);
  }

  const Var<T>& weight() const { return w_; }
  const Var<T>& bias() const { return b_; }

 private:
  Var<T> w_, b_;
  ConvSpec spec_;
};

template <typename T>
class NormLayer {
 public:
  NormLayer() = default;
  NormLayer(ParamRegistry<T>& reg, const std::string& name, long c, bool zero_gamma = false)
      : gamma_(reg.add(name + ".gamma", zero_gamma ? Tensor<T>::zeros(Shape{c})
                                                   : Tensor<T>::ones(Shape{c}))),
        beta_(reg.add(name + ".beta", Tensor<T>::zeros(Shape{c}))) {}

  Var<T> operator()(const Var<T>& x) const { return layer_norm_c(x, gamma_, beta_); }

 private:
  Var<T> gamma_, beta_;
};

template <typename T>
class PReluLayer {
 public:
  PReluLayer() = default;
  PReluLayer(ParamRegistry<T>& reg, const std::string& name, long c)
      : slope_(reg.add(name + ".slope", Tensor<T>::full(Shape{c}, T(0.25)))) {}

  Var<T> operator()(const Var<T>& x) const { return prelu(x, slope_); }

 private:
  Var<T> slope_;
};

}  // namespace octaseg
