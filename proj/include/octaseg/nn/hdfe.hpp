// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "octaseg/nn/blocks.hpp"

namespace octaseg {

// Residual extractor that splits a stem into a directional stream (paired
// horizontal/vertical strip convolutions) and a multi-scale dilated stream,
// then softmax-blends the two and reweights channels before the skip add.

/// Top-down blend of three same-size maps: p3 = f3(s3), p2 = f2(s2 + p3),
/// p1 = f1(s1 + p2). The final conv starts at zero so the stream vanishes
/// at init.
template <typename T>
class PyramidEnhance {
 public:
  PyramidEnhance() = default;
  PyramidEnhance(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c) {
    p3_ = Conv2dLayer<T>(reg, name + ".p3", rng, c, c, 3, 3, ConvSpec{1, 1, 1});
    p2_ = Conv2dLayer<T>(reg, name + ".p2", rng, c, c, 3, 3, ConvSpec{1, 1, 1});
    p1_ = Conv2dLayer<T>(reg, name + ".p1", rng, c, c, 3, 3,
                         ConvSpec{1, 1, 1, 1, 1, 1, /*zero_init=*/true});
  }

  Var<T> operator()(const Var<T>& s1, const Var<T>& s2, const Var<T>& s3) const {
    auto t3 = p3_(s3);
    auto t2 = p2_(add(s2, t3));
    return p1_(add(s1, t2));
  }

 private:
  Conv2dLayer<T> p3_, p2_, p1_;
};

template <typename T>
class HDFEBlock {
 public:
  HDFEBlock() = default;
  HDFEBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c,
            DsconvMode mode = DsconvMode::Plain)
      : fusion_w_(reg.add(name + ".fusion_w", Tensor<T>::zeros(Shape{2}))) {
    stem_pre_ = Conv2dLayer<T>(reg, name + ".stem_pre", rng, c, c, 1, 1);
    stem_act_ = PReluLayer<T>(reg, name + ".stem_act", c);
    stem_ghost_ = GhostBlock<T>(reg, name + ".stem_ghost", rng, c, c);
    ds_h_ = DsconvDirectional<T>(reg, name + ".ds_h", rng, c, DsconvOrientation::Horizontal,
                                 mode);
    ds_v_ = DsconvDirectional<T>(reg, name + ".ds_v", rng, c, DsconvOrientation::Vertical,
                                 mode);
    interact_ = Conv2dLayer<T>(reg, name + ".interact", rng, c, 2 * c, 1, 1,
                               ConvSpec{1, 0, 0, 1, 1, 1, /*zero_init=*/true});
    for (int i = 0; i < 3; ++i) {
      long rate = 2 * (i + 1);
      dil_[i] = Conv2dLayer<T>(reg, name + ".dil" + std::to_string(rate), rng, c, c, 3, 3,
                               ConvSpec{1, rate, rate, rate, rate});
    }
    pyramid_ = PyramidEnhance<T>(reg, name + ".pyr", rng, c);
    eca_ = ECABlock<T>(reg, name + ".eca", rng, c);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto s = stem_ghost_(stem_act_(stem_pre_(x)));
    auto d = interact_(concat_c(ds_h_(s), ds_v_(s)));
    auto m = pyramid_(dil_[0](s), dil_[1](s), dil_[2](s));
    auto w = softmax_vec(fusion_w_);
    auto fused = weighted_sum(w, {d, m});
    return add(eca_(fused), x);
  }

 private:
  Var<T> fusion_w_;
  Conv2dLayer<T> stem_pre_;
  PReluLayer<T> stem_act_;
  GhostBlock<T> stem_ghost_;
  DsconvDirectional<T> ds_h_, ds_v_;
  Conv2dLayer<T> interact_;
  Conv2dLayer<T> dil_[3];
  PyramidEnhance<T> pyramid_;
  ECABlock<T> eca_;
};

}  // namespace octaseg
