// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "octaseg/nn/blocks.hpp"

namespace octaseg {

/// 90-degree rotations as exact, loss-free index permutations.
template <typename T>
Var<T> rot90_cw(const Var<T>& x) {
  return flip_w(transpose_hw(x));
}
template <typename T>
Var<T> rot90_ccw(const Var<T>& x) {
  return flip_h(transpose_hw(x));
}

/// Channel attention from three pooled descriptors (global average, global
/// max, local 4x4 average re-pooled). Descriptors stack as a (B,3,C,1) map so
/// the tiny conv tower is shared across channels.
template <typename T>
class VCAB {
 public:
  VCAB() = default;
  VCAB(ParamRegistry<T>& reg, const std::string& name, Rng& rng) {
    mix1_ = Conv2dLayer<T>(reg, name + ".mix1", rng, 3, 3, 1, 1);
    dw_ = Conv2dLayer<T>(reg, name + ".dw", rng, 3, 3, 3, 3, ConvSpec{1, 1, 1, 1, 1, 3});
    pw_ = Conv2dLayer<T>(reg, name + ".pw", rng, 3, 3, 1, 1);
    out_ = Conv2dLayer<T>(reg, name + ".out", rng, 1, 3, 1, 1);
  }

  Var<T> operator()(const Var<T>& x) const {
    long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto pack = [&](const Var<T>& d) { return reshape(d, Shape{B, 1, C, 1}); };
    auto d_avg = pack(global_avg_pool(x));
    auto d_max = pack(global_max_pool(x));
    long gh = std::min<long>(4, H), gw = std::min<long>(4, W);
    auto d_loc = pack(global_avg_pool(bilinear_resize(adaptive_avg_pool(x, gh, gw), H, W)));
    auto t = concat_c(std::vector<Var<T>>{d_avg, d_max, d_loc});
    auto g = sigmoid(out_(pw_(dw_(relu(mix1_(t))))));
    return reshape(g, Shape{B, C, 1, 1});
  }

 private:
  Conv2dLayer<T> mix1_, dw_, pw_, out_;
};

/// Spatial attention over pooled channel statistics with four oriented
/// branches (dense 7x7, horizontal 1x9, vertical 9x1, anti-diagonal via
/// rotate-convolve-rotate-back).
template <typename T>
class VSAB {
 public:
  VSAB() = default;
  VSAB(ParamRegistry<T>& reg, const std::string& name, Rng& rng, bool diagonal = true)
      : diagonal_(diagonal) {
    base_ = Conv2dLayer<T>(reg, name + ".base", rng, 1, 2, 7, 7, ConvSpec{1, 3, 3});
    hor_ = Conv2dLayer<T>(reg, name + ".hor", rng, 1, 2, 1, 9, ConvSpec{1, 0, 4});
    ver_ = Conv2dLayer<T>(reg, name + ".ver", rng, 1, 2, 9, 1, ConvSpec{1, 4, 0});
    if (diagonal) diag_ = Conv2dLayer<T>(reg, name + ".diag", rng, 1, 2, 1, 9, ConvSpec{1, 0, 4});
    fuse_ = Conv2dLayer<T>(reg, name + ".fuse", rng, 1, diagonal ? 4 : 3, 1, 1);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto s = channel_stats(x);
    std::vector<Var<T>> maps{base_(s), hor_(s), ver_(s)};
    if (diagonal_) {
      require(x.dim(2) == x.dim(3), ErrorCode::NonSquareInput,
              "diagonal spatial attention needs H == W, got " + x.shape().str());
      maps.push_back(rot90_ccw(diag_(rot90_cw(s))));
    }
    return sigmoid(fuse_(concat_c(maps)));
  }

 private:
  Conv2dLayer<T> base_, hor_, ver_, diag_, fuse_;
  bool diagonal_ = true;
};

/// Structural attention: center-line, bifurcation, and width-variation maps
/// fused to one gate.
template <typename T>
class VSTAB {
 public:
  VSTAB() = default;
  VSTAB(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c) {
    center_ = Conv2dLayer<T>(reg, name + ".center", rng, 1, c, 3, 3, ConvSpec{1, 1, 1});
    bifur_ = Conv2dLayer<T>(reg, name + ".bifur", rng, 1, c, 3, 3, ConvSpec{1, 2, 2, 2, 2});
    width_ = Conv2dLayer<T>(reg, name + ".width", rng, 1, c, 5, 5, ConvSpec{1, 4, 4, 2, 2});
    fuse_ = Conv2dLayer<T>(reg, name + ".fuse", rng, 1, 3, 1, 1);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto maps = concat_c(std::vector<Var<T>>{sigmoid(center_(x)), sigmoid(bifur_(x)),
                                             sigmoid(width_(x))});
    return sigmoid(fuse_(maps));
  }

 private:
  Conv2dLayer<T> center_, bifur_, width_, fuse_;
};

/// Vessel multi-attention fusion: the three gates modulate x, a learnable
/// softmax mixes the gated maps, a zero-initialized enhance path turns the
/// mix into a residual update. Identity at construction.
template <typename T>
class VMAFBlock {
 public:
  VMAFBlock() = default;
  VMAFBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c,
            bool diagonal = true) {
    vcab_ = VCAB<T>(reg, name + ".vcab", rng);
    vsab_ = VSAB<T>(reg, name + ".vsab", rng, diagonal);
    vstab_ = VSTAB<T>(reg, name + ".vstab", rng, c);
    fusion_w_ = reg.add(name + ".fusion_w", Tensor<T>::zeros(Shape{3}));
    enhance_ = Conv2dLayer<T>(reg, name + ".enhance", rng, c, c, 3, 3,
                              ConvSpec{1, 1, 1, 1, 1, 1, /*zero_init=*/true});
    norm_ = NormLayer<T>(reg, name + ".norm", c);
  }

  Var<T> operator()(const Var<T>& x) const {
    std::vector<Var<T>> gated{mul_gate(x, vcab_(x)), mul_gate(x, vsab_(x)),
                              mul_gate(x, vstab_(x))};
    auto a = weighted_sum(softmax_vec(fusion_w_), gated);
    auto e = silu(norm_(enhance_(a)));
    return add(x, e);
  }

  Var<T> channel_gate(const Var<T>& x) const { return vcab_(x); }
  Var<T> spatial_gate(const Var<T>& x) const { return vsab_(x); }
  Var<T> structural_gate(const Var<T>& x) const { return vstab_(x); }
  const Var<T>& fusion_logits() const { return fusion_w_; }

 private:
  VCAB<T> vcab_;
  VSAB<T> vsab_;
  VSTAB<T> vstab_;
  Var<T> fusion_w_;
  Conv2dLayer<T> enhance_;
  NormLayer<T> norm_;
};

}  // namespace octaseg
