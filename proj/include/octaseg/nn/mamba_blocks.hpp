// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "octaseg/nn/hdfe.hpp"
#include "octaseg/nn/ssm.hpp"
#include "octaseg/nn/vmaf.hpp"

namespace octaseg {

// Composite residual blocks wrapping the cross-scan: a gated 2-D scan unit
// plus the local-attention and enhancement stages specific to the vessel and
// zone stages.

/// Gated cross-scan: main = cross_scan(proj_in(x)); the gate path optionally
/// routes through a multi-attention fusion stage before SiLU. proj_out starts
/// at zero, so the whole unit is an exact identity at init.
template <typename T>
class VSS2D {
 public:
  VSS2D() = default;
  VSS2D(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c, long n,
        bool use_vmaf_gate)
      : use_vmaf_(use_vmaf_gate) {
    proj_in_ = Conv2dLayer<T>(reg, name + ".proj_in", rng, c, c, 1, 1);
    proj_gate_ = Conv2dLayer<T>(reg, name + ".proj_gate", rng, c, c, 1, 1);
    cross_ = CrossScan2D<T>(reg, name + ".cross", rng, c, n);
    if (use_vmaf_) vmaf_ = VMAFBlock<T>(reg, name + ".vmaf", rng, c);
    proj_out_ = Conv2dLayer<T>(reg, name + ".proj_out", rng, c, c, 1, 1,
                               ConvSpec{1, 0, 0, 1, 1, 1, /*zero_init=*/true});
  }

  Var<T> operator()(const Var<T>& x) const {
    auto main = cross_(proj_in_(x));
    auto g = proj_gate_(x);
    if (use_vmaf_) g = vmaf_(g);
    return add(proj_out_(mul(main, silu(g))), x);
  }

 private:
  bool use_vmaf_ = false;
  Conv2dLayer<T> proj_in_, proj_gate_, proj_out_;
  CrossScan2D<T> cross_;
  VMAFBlock<T> vmaf_;
};

/// Local spatial attention: out = x + x ⊙ sigmoid(depthwise 3x3(x)). The conv
/// starts at zero, so the block scales by 1.5 at init.
template <typename T>
class LSABlock {
 public:
  LSABlock() = default;
  LSABlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c) {
    gate_ = Conv2dLayer<T>(reg, name + ".gate", rng, c, c, 3, 3,
                           ConvSpec{1, 1, 1, 1, 1, c, /*zero_init=*/true});
  }

  Var<T> operator()(const Var<T>& x) const {
    return add(x, mul(x, sigmoid(gate_(x))));
  }

 private:
  Conv2dLayer<T> gate_;
};

/// Binary disk indicator (1,1,H,W): 1 where
/// (i-floor(H/2))^2 + (j-floor(W/2))^2 <= floor(min(H,W)/4)^2.
template <typename T>
Tensor<T> make_circle_mask(long H, long W) {
  Tensor<T> m({1, 1, H, W});
  long r = std::min(H, W) / 4, ci = H / 2, cj = W / 2;
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j)
      m.at(0, 0, i, j) = ((i - ci) * (i - ci) + (j - cj) * (j - cj) <= r * r) ? T(1) : T(0);
  return m;
}

/// Center-emphasis enhancement: f = SE(grouped dilated 7x7(x)); features
/// inside the central disk are doubled when the mask is enabled;
/// out = x + 0.3 f.
template <typename T>
class CFEBBlock {
 public:
  CFEBBlock() = default;
  CFEBBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c,
            bool mask_enabled = true)
      : mask_enabled_(mask_enabled) {
    require(c % 4 == 0, ErrorCode::BadChannels, "CFEB needs channels divisible by 4");
    conv_ = Conv2dLayer<T>(reg, name + ".conv", rng, c, c, 7, 7, ConvSpec{1, 6, 6, 2, 2, 4});
    se_ = SEBlock<T>(reg, name + ".se", rng, c, std::min<long>(16, c));
  }

  /// The enhancement features f (mask applied when enabled); the block output
  /// is x + 0.3 f.
  Var<T> features(const Var<T>& x) const {
    auto f = se_(conv_(x));
    if (mask_enabled_) {
      long B = x.dim(0), H = x.dim(2), W = x.dim(3);
      Tensor<T> gate({B, 1, H, W});
      Tensor<T> disk = make_circle_mask<T>(H, W);
      for (long b = 0; b < B; ++b)
        for (long i = 0; i < H * W; ++i) gate[b * H * W + i] = T(1) + disk[i];
      f = mul_gate(f, Var<T>::leaf(std::move(gate)));
    }
    return f;
  }

  Var<T> operator()(const Var<T>& x) const { return add(x, scale(features(x), T(0.3))); }

 private:
  bool mask_enabled_ = true;
  Conv2dLayer<T> conv_;
  SEBlock<T> se_;
};

/// Vessel-stage residual block: extractor → gated cross-scan → local
/// attention → zero-γ norm → SiLU → + x. Exact identity at init.
template <typename T>
class RVMambaBlock {
 public:
  RVMambaBlock() = default;
  RVMambaBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c, long n,
               bool use_hdfe, bool use_vmaf_gate, DsconvMode mode)
      : use_hdfe_(use_hdfe) {
    if (use_hdfe_) hdfe_ = HDFEBlock<T>(reg, name + ".hdfe", rng, c, mode);
    vss_ = VSS2D<T>(reg, name + ".vss", rng, c, n, use_vmaf_gate);
    lsa_ = LSABlock<T>(reg, name + ".lsa", rng, c);
    norm_ = NormLayer<T>(reg, name + ".norm", c, /*zero_gamma=*/true);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto h = use_hdfe_ ? hdfe_(x) : x;
    return add(x, silu(norm_(lsa_(vss_(h)))));
  }

 private:
  bool use_hdfe_ = false;
  HDFEBlock<T> hdfe_;
  VSS2D<T> vss_;
  LSABlock<T> lsa_;
  NormLayer<T> norm_;
};

/// Zone-stage residual block: extractor → ungated cross-scan →
/// center-emphasis → local attention → zero-γ norm → SiLU → + x.
template <typename T>
class FAZMambaBlock {
 public:
  FAZMambaBlock() = default;
  FAZMambaBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c, long n,
                bool use_hdfe, bool use_cfeb, DsconvMode mode)
      : use_hdfe_(use_hdfe), use_cfeb_(use_cfeb) {
    if (use_hdfe_) hdfe_ = HDFEBlock<T>(reg, name + ".hdfe", rng, c, mode);
    vss_ = VSS2D<T>(reg, name + ".vss", rng, c, n, /*use_vmaf_gate=*/false);
    if (use_cfeb_) cfeb_ = CFEBBlock<T>(reg, name + ".cfeb", rng, c);
    lsa_ = LSABlock<T>(reg, name + ".lsa", rng, c);
    norm_ = NormLayer<T>(reg, name + ".norm", c, /*zero_gamma=*/true);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto h = use_hdfe_ ? hdfe_(x) : x;
    auto v = vss_(h);
    if (use_cfeb_) v = cfeb_(v);
    return add(x, silu(norm_(lsa_(v))));
  }

 private:
  bool use_hdfe_ = false, use_cfeb_ = true;
  HDFEBlock<T> hdfe_;
  VSS2D<T> vss_;
  CFEBBlock<T> cfeb_;
  LSABlock<T> lsa_;
  NormLayer<T> norm_;
};

}  // namespace octaseg
