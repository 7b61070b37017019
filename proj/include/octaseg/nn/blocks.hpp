// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "octaseg/core/config.hpp"
#include "octaseg/nn/layers.hpp"

namespace octaseg {

/// Squeeze-excitation channel gate.
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c,
          long reduction = 16) {
    require(c >= reduction, ErrorCode::ChannelTooSmall,
            name + ": channels " + std::to_string(c) + " < reduction " +
                std::to_string(reduction));
    fc1_ = Conv2dLayer<T>(reg, name + ".fc1", rng, c / reduction, c, 1, 1);
    fc2_ = Conv2dLayer<T>(reg, name + ".fc2", rng, c, c / reduction, 1, 1);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto s = sigmoid(fc2_(relu(fc1_(global_avg_pool(x)))));
    return mul_gate(x, s);
  }

 private:
  Conv2dLayer<T> fc1_, fc2_;
};

/// Kernel size for the efficient channel attention 1-D conv.
inline long eca_kernel_size(long channels) {
  long t = static_cast<long>(std::floor(std::abs(std::log2(static_cast<double>(channels)) / 2.0 + 0.5)));
  long k = (t % 2 == 1) ? t : t + 1;
  return k < 1 ? 1 : k;
}

/// Efficient channel attention: 1-D conv across the pooled channel
/// descriptor, kernel size adapted to the channel count.
template <typename T>
class ECABlock {
 public:
  ECABlock() = default;
  ECABlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c) : c_(c) {
    long k = eca_kernel_size(c);
    conv_ = Conv2dLayer<T>(reg, name + ".conv", rng, 1, 1, k, 1, ConvSpec{1, k / 2, 0, 1, 1, 1});
  }

  Var<T> operator()(const Var<T>& x) const {
    long B = x.dim(0);
    auto d = reshape(global_avg_pool(x), Shape{B, 1, c_, 1});
    auto g = reshape(sigmoid(conv_(d)), Shape{B, c_, 1, 1});
    return mul_gate(x, g);
  }

 private:
  Conv2dLayer<T> conv_;
  long c_ = 0;
};

/// Ghost module: half the outputs from a 1x1 conv, the other half from a
/// cheap depthwise 3x3 over the first half.
template <typename T>
class GhostBlock {
 public:
  GhostBlock() = default;
  GhostBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long cin, long cout) {
    require(cout % 2 == 0, ErrorCode::OddChannels,
            name + ": ghost output channels must be even, got " + std::to_string(cout));
    long half = cout / 2;
    primary_ = Conv2dLayer<T>(reg, name + ".primary", rng, half, cin, 1, 1);
    cheap_ = Conv2dLayer<T>(reg, name + ".cheap", rng, half, half, 3, 3,
                            ConvSpec{1, 1, 1, 1, 1, half});
  }

  Var<T> operator()(const Var<T>& x) const {
    auto p = relu(primary_(x));
    auto g = relu(cheap_(p));
    return concat_c(p, g);
  }

 private:
  Conv2dLayer<T> primary_, cheap_;
};

namespace detail {

/// Directional conv whose 7 taps sample at learned fractional offsets
/// perpendicular to the kernel axis (bilinear between the two nearest rows
/// or columns, zero outside). At zero offsets this is exactly the plain conv.
template <typename T>
Var<T> dsconv_offset_op(const Var<T>& x, const Var<T>& w, const Var<T>& b,
                        const Var<T>& offsets, bool horizontal) {
  long B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  long Cout = w.dim(0), K = horizontal ? w.dim(3) : w.dim(2);
  long r = K / 2;
  require(offsets.dim(0) == K, ErrorCode::ShapeMismatch, "dsconv offsets arity");
  // sample(b,ci,h,w,j): bilinear fetch used by both passes
  auto fetch = [&](const Tensor<T>& src, long bi, long ci, long h, long wv, long j,
                   T off) -> T {
    T rr, cc;
    if (horizontal) {
      rr = static_cast<T>(h) + off;
      cc = static_cast<T>(wv + j - r);
    } else {
      rr = static_cast<T>(h + j - r);
      cc = static_cast<T>(wv) + off;
    }
    long c0 = static_cast<long>(std::floor(horizontal ? rr : cc));
    T f = (horizontal ? rr : cc) - static_cast<T>(c0);
    auto pix = [&](long hh, long ww) -> T {
      if (hh < 0 || hh >= H || ww < 0 || ww >= W) return T(0);
      return src.at(bi, ci, hh, ww);
    };
    if (horizontal) {
      long icc = static_cast<long>(cc);
      return (T(1) - f) * pix(c0, icc) + f * pix(c0 + 1, icc);
    }
    long irr = h + j - r;
    return (T(1) - f) * pix(irr, c0) + f * pix(irr, c0 + 1);
  };

  Tensor<T> out({B, Cout, H, W});
  for (long bi = 0; bi < B; ++bi)
    for (long co = 0; co < Cout; ++co)
      for (long h = 0; h < H; ++h)
        for (long wv = 0; wv < W; ++wv) {
          T acc = b.value()[co];
          for (long ci = 0; ci < Cin; ++ci)
            for (long j = 0; j < K; ++j) {
              T wt = horizontal ? w.value().at(co, ci, 0, j) : w.value().at(co, ci, j, 0);
              acc += wt * fetch(x.value(), bi, ci, h, wv, j, offsets.value()[j]);
            }
          out.at(bi, co, h, wv) = acc;
        }

  auto xn = x.node(), wn = w.node(), bn = b.node(), on = offsets.node();
  return make_op<T>(
      std::move(out), {xn, wn, bn, on},
      [xn, wn, bn, on, B, Cin, Cout, H, W, K, r, horizontal](Node<T>& n) {
        for (long bi = 0; bi < B; ++bi)
          for (long h = 0; h < H; ++h)
            for (long wv = 0; wv < W; ++wv)
              for (long j = 0; j < K; ++j) {
                T off = on->value[j];
                T f;
                bool in_a, in_b;
                long ha, wa, hb, wb;
                if (horizontal) {
                  T rr = static_cast<T>(h) + off;
                  long h0 = static_cast<long>(std::floor(rr));
                  f = rr - static_cast<T>(h0);
                  ha = h0; wa = wv + j - r; hb = h0 + 1; wb = wa;
                } else {
                  T cc = static_cast<T>(wv) + off;
                  long w0 = static_cast<long>(std::floor(cc));
                  f = cc - static_cast<T>(w0);
                  ha = h + j - r; wa = w0; hb = ha; wb = w0 + 1;
                }
                in_a = ha >= 0 && ha < H && wa >= 0 && wa < W;
                in_b = hb >= 0 && hb < H && wb >= 0 && wb < W;
                if (!in_a && !in_b && !on->requires_grad) continue;
                for (long ci = 0; ci < Cin; ++ci) {
                  long ci_base = (bi * Cin + ci) * H * W;
                  T va = in_a ? xn->value[ci_base + ha * W + wa] : T(0);
                  T vb = in_b ? xn->value[ci_base + hb * W + wb] : T(0);
                  T wsum = T(0);  // sum over co of dy * w for this (ci, j)
                  for (long co = 0; co < Cout; ++co) {
                    T dy = n.grad.at(bi, co, h, wv);
                    if (dy == T(0)) continue;
                    T wt = horizontal ? wn->value.at(co, ci, 0, j)
                                      : wn->value.at(co, ci, j, 0);
                    wsum += dy * wt;
                    if (wn->requires_grad) {
                      T val = (T(1) - f) * va + f * vb;
                      auto& gw = wn->ensure_grad();
                      if (horizontal)
                        gw.at(co, ci, 0, j) += dy * val;
                      else
                        gw.at(co, ci, j, 0) += dy * val;
                    }
                  }
                  if (xn->requires_grad && wsum != T(0)) {
                    auto& gx = xn->ensure_grad();
                    if (in_a) gx[ci_base + ha * W + wa] += wsum * (T(1) - f);
                    if (in_b) gx[ci_base + hb * W + wb] += wsum * f;
                  }
                  if (on->requires_grad && wsum != T(0))
                    on->ensure_grad()[j] += wsum * (vb - va);
                }
              }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (long bi = 0; bi < B; ++bi)
            for (long co = 0; co < Cout; ++co) {
              T acc = T(0);
              const T* go = n.grad.data() + (bi * Cout + co) * H * W;
              for (long i = 0; i < H * W; ++i) acc += go[i];
              gb[co] += acc;
            }
        }
      });
}

}  // namespace detail

enum class DsconvOrientation { Horizontal, Vertical };  // 1x7 vs 7x1

/// Directional 7-tap conv used to encode orientation cues; `offset` mode adds
/// learnable perpendicular per-tap offsets, zero-initialized so both modes
/// coincide at construction.
template <typename T>
class DsconvDirectional {
 public:
  DsconvDirectional() = default;
  DsconvDirectional(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c,
                    DsconvOrientation orient, DsconvMode mode)
      : orient_(orient), mode_(mode) {
    bool hz = orient == DsconvOrientation::Horizontal;
    conv_ = Conv2dLayer<T>(reg, name + ".conv", rng, c, c, hz ? 1 : 7, hz ? 7 : 1,
                           ConvSpec{1, hz ? 0 : 3, hz ? 3 : 0, 1, 1, 1});
    if (mode == DsconvMode::Offset)
      offsets_ = reg.add(name + ".offsets", Tensor<T>::zeros(Shape{7}));
  }

  Var<T> operator()(const Var<T>& x) const {
    if (mode_ == DsconvMode::Plain) return conv_(x);
    return detail::dsconv_offset_op(x, conv_.weight(), conv_.bias(), offsets_,
                                    orient_ == DsconvOrientation::Horizontal);
  }

 private:
  Conv2dLayer<T> conv_;
  Var<T> offsets_;
  DsconvOrientation orient_ = DsconvOrientation::Horizontal;
  DsconvMode mode_ = DsconvMode::Plain;
};

/// Attentional feature fusion of a skip connection and an upsampled map:
/// fused = m * skip + (1-m) * up, m from a two-scale channel attention.
template <typename T>
class AFFBlock {
 public:
  AFFBlock() = default;
  AFFBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c,
           long reduction = 4) {
    require(c >= reduction, ErrorCode::ChannelTooSmall, name + ": channels < reduction");
    long mid = c / reduction;
    local1_ = Conv2dLayer<T>(reg, name + ".local1", rng, mid, c, 1, 1);
    local2_ = Conv2dLayer<T>(reg, name + ".local2", rng, c, mid, 1, 1);
    global1_ = Conv2dLayer<T>(reg, name + ".global1", rng, mid, c, 1, 1);
    global2_ = Conv2dLayer<T>(reg, name + ".global2", rng, c, mid, 1, 1);
  }

  Var<T> operator()(const Var<T>& skip, const Var<T>& up) const {
    require(skip.shape() == up.shape(), ErrorCode::ShapeMismatch,
            "aff expects identical shapes, got " + skip.shape().str() + " vs " +
                up.shape().str());
    auto s = add(skip, up);
    auto local = local2_(relu(local1_(s)));
    auto global = global2_(relu(global1_(global_avg_pool(s))));
    auto m = sigmoid(add_bcast_c(local, global));
    return lerp(m, skip, up);
  }

 private:
  Conv2dLayer<T> local1_, local2_, global1_, global2_;
};

/// Four-branch stem: expand to `width` channels, route width/4-channel groups
/// through {max pool, average pool, depthwise-separable conv, SE}, concat,
/// fuse to `out_channels`. Spatial size preserved.
template <typename T>
class CMBFBlock {
 public:
  CMBFBlock() = default;
  CMBFBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long cin, long cout,
            long width = 32)
      : width_(width) {
    require(width % 4 == 0, ErrorCode::BadChannels, name + ": stem width must divide by 4");
    long g = width / 4;
    expand_ = Conv2dLayer<T>(reg, name + ".expand", rng, width, cin, 1, 1);
    ds_depth_ = Conv2dLayer<T>(reg, name + ".ds.depth", rng, g, g, 3, 3,
                               ConvSpec{1, 1, 1, 1, 1, g});
    ds_point_ = Conv2dLayer<T>(reg, name + ".ds.point", rng, g, g, 1, 1);
    se_ = SEBlock<T>(reg, name + ".se", rng, g, std::min<long>(4, g));
    fuse_ = Conv2dLayer<T>(reg, name + ".fuse", rng, cout, width, 1, 1);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto e = expand_(x);
    long g = width_ / 4;
    auto b0 = pool_same(slice_c(e, 0, g), 3, true);
    auto b1 = pool_same(slice_c(e, g, 2 * g), 3, false);
    auto b2 = ds_point_(ds_depth_(slice_c(e, 2 * g, 3 * g)));
    auto b3 = se_(slice_c(e, 3 * g, 4 * g));
    return fuse_(concat_c(std::vector<Var<T>>{b0, b1, b2, b3}));
  }

 private:
  Conv2dLayer<T> expand_, ds_depth_, ds_point_, fuse_;
  SEBlock<T> se_;
  long width_ = 32;
};

}  // namespace octaseg
