// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "octaseg/core/autodiff.hpp"

namespace octaseg {

// Operators over (B,C,H,W) maps: convolution via im2col + GEMM, pooling,
// bilinear resampling, padding/cropping, channel concat/slice, axis
// permutations, and channel layer norm.

inline long conv_out_dim(long in, long k, long stride, long pad, long dil) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

namespace detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Unrolls one batch-group image slab (Cg,H,W) into (Cg*kh*kw, OH*OW).
template <typename T>
void im2col(const T* x, long Cg, long H, long W, long kh, long kw, long stride,
            long ph, long pw, long dh, long dw, long OH, long OW, T* col) {
  for (long c = 0; c < Cg; ++c)
    for (long ki = 0; ki < kh; ++ki)
      for (long kj = 0; kj < kw; ++kj) {
        T* row = col + ((c * kh + ki) * kw + kj) * OH * OW;
        for (long oh = 0; oh < OH; ++oh) {
          long ih = oh * stride - ph + ki * dh;
          if (ih < 0 || ih >= H) {
            std::fill(row + oh * OW, row + (oh + 1) * OW, T(0));
            continue;
          }
          const T* xi = x + (c * H + ih) * W;
          for (long ow = 0; ow < OW; ++ow) {
            long iw = ow * stride - pw + kj * dw;
            row[oh * OW + ow] = (iw >= 0 && iw < W) ? xi[iw] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_acc(const T* col, long Cg, long H, long W, long kh, long kw, long stride,
                long ph, long pw, long dh, long dw, long OH, long OW, T* gx) {
  for (long c = 0; c < Cg; ++c)
    for (long ki = 0; ki < kh; ++ki)
      for (long kj = 0; kj < kw; ++kj) {
        const T* row = col + ((c * kh + ki) * kw + kj) * OH * OW;
        for (long oh = 0; oh < OH; ++oh) {
          long ih = oh * stride - ph + ki * dh;
          if (ih < 0 || ih >= H) continue;
          T* gi = gx + (c * H + ih) * W;
          for (long ow = 0; ow < OW; ++ow) {
            long iw = ow * stride - pw + kj * dw;
            if (iw >= 0 && iw < W) gi[iw] += row[oh * OW + ow];
          }
        }
      }
}

}  // namespace detail

/// Grouped 2-D convolution. x (B,Cin,H,W), w (Cout,Cin/g,kh,kw), b (Cout).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, long stride = 1,
              long ph = 0, long pw = 0, long dh = 1, long dw = 1, long groups = 1) {
  require(x.shape().rank() == 4 && w.shape().rank() == 4, ErrorCode::ShapeMismatch,
          "conv2d expects 4-D x and w");
  long B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  long Cout = w.dim(0), Cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(Cin == Cg * groups && Cout % groups == 0, ErrorCode::ShapeMismatch,
          "conv2d channel/group mismatch");
  require(b.shape().rank() == 1 && b.dim(0) == Cout, ErrorCode::ShapeMismatch,
          "conv2d bias shape");
  long OH = conv_out_dim(H, kh, stride, ph, dh);
  long OW = conv_out_dim(W, kw, stride, pw, dw);
  require(OH > 0 && OW > 0, ErrorCode::ShapeMismatch, "conv2d output would be empty");
  long K = Cg * kh * kw, Og = Cout / groups, OHW = OH * OW;

  Tensor<T> out({B, Cout, OH, OW});
  std::vector<T> col(static_cast<size_t>(K) * OHW);
  for (long bi = 0; bi < B; ++bi)
    for (long g = 0; g < groups; ++g) {
      const T* xg = x.value().data() + (bi * Cin + g * Cg) * H * W;
      detail::im2col(xg, Cg, H, W, kh, kw, stride, ph, pw, dh, dw, OH, OW, col.data());
      detail::CMatMap<T> wm(w.value().data() + g * Og * K, Og, K);
      detail::CMatMap<T> cm(col.data(), K, OHW);
      detail::MatMap<T> om(out.data() + (bi * Cout + g * Og) * OHW, Og, OHW);
      om.noalias() = wm * cm;
    }
  for (long bi = 0; bi < B; ++bi)
    for (long co = 0; co < Cout; ++co) {
      T bias = b.value()[co];
      T* o = out.data() + (bi * Cout + co) * OHW;
      for (long i = 0; i < OHW; ++i) o[i] += bias;
    }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op<T>(
      std::move(out), {xn, wn, bn},
      [=](Node<T>& n) {
        std::vector<T> colb(static_cast<size_t>(K) * OHW);
        for (long bi = 0; bi < B; ++bi)
          for (long g = 0; g < groups; ++g) {
            detail::CMatMap<T> gy(n.grad.data() + (bi * Cout + g * Og) * OHW, Og, OHW);
            if (wn->requires_grad) {
              const T* xg = xn->value.data() + (bi * Cin + g * Cg) * H * W;
              detail::im2col(xg, Cg, H, W, kh, kw, stride, ph, pw, dh, dw, OH, OW,
                             colb.data());
              detail::CMatMap<T> cm(colb.data(), K, OHW);
              detail::MatMap<T> gw(wn->ensure_grad().data() + g * Og * K, Og, K);
              gw.noalias() += gy * cm.transpose();
            }
            if (xn->requires_grad) {
              detail::CMatMap<T> wm(wn->value.data() + g * Og * K, Og, K);
              detail::MatMap<T> gc(colb.data(), K, OHW);
              gc.noalias() = wm.transpose() * gy;
              T* gx = xn->ensure_grad().data() + (bi * Cin + g * Cg) * H * W;
              detail::col2im_acc(colb.data(), Cg, H, W, kh, kw, stride, ph, pw, dh, dw,
                                 OH, OW, gx);
            }
          }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (long bi = 0; bi < B; ++bi)
            for (long co = 0; co < Cout; ++co) {
              const T* go = n.grad.data() + (bi * Cout + co) * OHW;
              T acc = T(0);
              for (long i = 0; i < OHW; ++i) acc += go[i];
              gb[co] += acc;
            }
        }
      });
}

/// Global average pool to (B,C,1,1).
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out({B, C, 1, 1});
  T inv = T(1) / static_cast<T>(HW);
  for (long i = 0; i < B * C; ++i) {
    const T* xi = x.value().data() + i * HW;
    T acc = T(0);
    for (long j = 0; j < HW; ++j) acc += xi[j];
    out[i] = acc * inv;
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, HW, inv](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    for (long i = 0; i < B * C; ++i) {
      T g = n.grad[i] * inv;
      T* gx = xn->ensure_grad().data() + i * HW;
      for (long j = 0; j < HW; ++j) gx[j] += g;
    }
  });
}

/// Global max pool to (B,C,1,1); gradient routes to the first argmax.
template <typename T>
Var<T> global_max_pool(const Var<T>& x) {
  long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out({B, C, 1, 1});
  auto arg = std::make_shared<std::vector<long>>(static_cast<size_t>(B * C));
  for (long i = 0; i < B * C; ++i) {
    const T* xi = x.value().data() + i * HW;
    long best = 0;
    for (long j = 1; j < HW; ++j)
      if (xi[j] > xi[best]) best = j;
    (*arg)[static_cast<size_t>(i)] = best;
    out[i] = xi[best];
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, arg, B, C, HW](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    for (long i = 0; i < B * C; ++i)
      xn->ensure_grad()[i * HW + (*arg)[static_cast<size_t>(i)]] += n.grad[i];
  });
}

/// Adaptive average pool to (gh,gw) with floor/ceil bin edges.
template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, long gh, long gw) {
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(gh >= 1 && gw >= 1 && gh <= H && gw <= W, ErrorCode::ShapeMismatch,
          "adaptive_avg_pool grid");
  Tensor<T> out({B, C, gh, gw});
  auto edge = [](long i, long n, long g) { return (i * n) / g; };
  auto edge_up = [](long i, long n, long g) { return (i * n + g - 1) / g; };
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c)
      for (long i = 0; i < gh; ++i) {
        long h0 = edge(i, H, gh), h1 = edge_up(i + 1, H, gh);
        for (long j = 0; j < gw; ++j) {
          long w0 = edge(j, W, gw), w1 = edge_up(j + 1, W, gw);
          T acc = T(0);
          for (long h = h0; h < h1; ++h)
            for (long w = w0; w < w1; ++w) acc += x.value().at(b, c, h, w);
          out.at(b, c, i, j) = acc / static_cast<T>((h1 - h0) * (w1 - w0));
        }
      }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, H, W, gh, gw, edge, edge_up](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c)
        for (long i = 0; i < gh; ++i) {
          long h0 = edge(i, H, gh), h1 = edge_up(i + 1, H, gh);
          for (long j = 0; j < gw; ++j) {
            long w0 = edge(j, W, gw), w1 = edge_up(j + 1, W, gw);
            T g = n.grad.at(b, c, i, j) / static_cast<T>((h1 - h0) * (w1 - w0));
            for (long h = h0; h < h1; ++h)
              for (long w = w0; w < w1; ++w) gx.at(b, c, h, w) += g;
          }
        }
  });
}

/// k x k stride-1 same-size pooling over the valid part of each window.
template <typename T>
Var<T> pool_same(const Var<T>& x, long k, bool max_mode) {
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  long r = k / 2;
  Tensor<T> out(x.shape());
  std::shared_ptr<std::vector<long>> arg;
  if (max_mode) arg = std::make_shared<std::vector<long>>(static_cast<size_t>(out.numel()));
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c) {
      const T* xi = x.value().data() + (b * C + c) * H * W;
      T* yo = out.data() + (b * C + c) * H * W;
      for (long h = 0; h < H; ++h)
        for (long w = 0; w < W; ++w) {
          long h0 = std::max<long>(0, h - r), h1 = std::min(H, h - r + k);
          long w0 = std::max<long>(0, w - r), w1 = std::min(W, w - r + k);
          if (max_mode) {
            long best = h0 * W + w0;
            for (long hh = h0; hh < h1; ++hh)
              for (long ww = w0; ww < w1; ++ww)
                if (xi[hh * W + ww] > xi[best]) best = hh * W + ww;
            yo[h * W + w] = xi[best];
            (*arg)[static_cast<size_t>((b * C + c) * H * W + h * W + w)] = best;
          } else {
            T acc = T(0);
            for (long hh = h0; hh < h1; ++hh)
              for (long ww = w0; ww < w1; ++ww) acc += xi[hh * W + ww];
            yo[h * W + w] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
          }
        }
    }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, H, W, k, r, max_mode, arg](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c) {
        T* gi = gx.data() + (b * C + c) * H * W;
        const T* go = n.grad.data() + (b * C + c) * H * W;
        for (long h = 0; h < H; ++h)
          for (long w = 0; w < W; ++w) {
            if (max_mode) {
              gi[(*arg)[static_cast<size_t>((b * C + c) * H * W + h * W + w)]] +=
                  go[h * W + w];
            } else {
              long h0 = std::max<long>(0, h - r), h1 = std::min(H, h - r + k);
              long w0 = std::max<long>(0, w - r), w1 = std::min(W, w - r + k);
              T g = go[h * W + w] / static_cast<T>((h1 - h0) * (w1 - w0));
              for (long hh = h0; hh < h1; ++hh)
                for (long ww = w0; ww < w1; ++ww) gi[hh * W + ww] += g;
            }
          }
      }
  });
}

/// Per-pixel mean and max over channels, stacked as (B,2,H,W): mean then max.
template <typename T>
Var<T> channel_stats(const Var<T>& x) {
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), HW = H * W;
  Tensor<T> out({B, 2, H, W});
  auto arg = std::make_shared<std::vector<long>>(static_cast<size_t>(B * HW));
  T inv = T(1) / static_cast<T>(C);
  for (long b = 0; b < B; ++b)
    for (long i = 0; i < HW; ++i) {
      const T* base = x.value().data() + b * C * HW + i;
      T acc = T(0);
      long best = 0;
      for (long c = 0; c < C; ++c) {
        T v = base[c * HW];
        acc += v;
        if (v > base[best * HW]) best = c;
      }
      out[b * 2 * HW + i] = acc * inv;
      out[b * 2 * HW + HW + i] = base[best * HW];
      (*arg)[static_cast<size_t>(b * HW + i)] = best;
    }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, arg, B, C, HW, inv](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long i = 0; i < HW; ++i) {
        T gm = n.grad[b * 2 * HW + i] * inv;
        for (long c = 0; c < C; ++c) gx[b * C * HW + c * HW + i] += gm;
        gx[b * C * HW + (*arg)[static_cast<size_t>(b * HW + i)] * HW + i] +=
            n.grad[b * 2 * HW + HW + i];
      }
  });
}

/// Bilinear resize to (oh,ow), half-pixel centers (align_corners=false).
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, long oh, long ow) {
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (oh == H && ow == W) return x;
  Tensor<T> out({B, C, oh, ow});
  T sh = static_cast<T>(H) / static_cast<T>(oh);
  T sw = static_cast<T>(W) / static_cast<T>(ow);
  struct Tap { long i0, i1; T w0, w1; };
  std::vector<Tap> th(static_cast<size_t>(oh)), tw(static_cast<size_t>(ow));
  auto make_tap = [](long o, T s, long n) {
    T src = (static_cast<T>(o) + T(0.5)) * s - T(0.5);
    if (src < T(0)) src = T(0);
    long i0 = static_cast<long>(std::floor(src));
    if (i0 > n - 1) i0 = n - 1;
    long i1 = std::min(i0 + 1, n - 1);
    T f = src - static_cast<T>(i0);
    return Tap{i0, i1, T(1) - f, f};
  };
  for (long i = 0; i < oh; ++i) th[static_cast<size_t>(i)] = make_tap(i, sh, H);
  for (long j = 0; j < ow; ++j) tw[static_cast<size_t>(j)] = make_tap(j, sw, W);
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c) {
      const T* xi = x.value().data() + (b * C + c) * H * W;
      T* yo = out.data() + (b * C + c) * oh * ow;
      for (long i = 0; i < oh; ++i) {
        const Tap& a = th[static_cast<size_t>(i)];
        for (long j = 0; j < ow; ++j) {
          const Tap& d = tw[static_cast<size_t>(j)];
          yo[i * ow + j] = a.w0 * (d.w0 * xi[a.i0 * W + d.i0] + d.w1 * xi[a.i0 * W + d.i1]) +
                           a.w1 * (d.w0 * xi[a.i1 * W + d.i0] + d.w1 * xi[a.i1 * W + d.i1]);
        }
      }
    }
  auto xn = x.node();
  auto thp = std::make_shared<std::vector<Tap>>(std::move(th));
  auto twp = std::make_shared<std::vector<Tap>>(std::move(tw));
  return make_op<T>(std::move(out), {xn}, [xn, thp, twp, B, C, H, W, oh, ow](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c) {
        T* gi = gx.data() + (b * C + c) * H * W;
        const T* go = n.grad.data() + (b * C + c) * oh * ow;
        for (long i = 0; i < oh; ++i) {
          const Tap& a = (*thp)[static_cast<size_t>(i)];
          for (long j = 0; j < ow; ++j) {
            const Tap& d = (*twp)[static_cast<size_t>(j)];
            T g = go[i * ow + j];
            gi[a.i0 * W + d.i0] += a.w0 * d.w0 * g;
            gi[a.i0 * W + d.i1] += a.w0 * d.w1 * g;
            gi[a.i1 * W + d.i0] += a.w1 * d.w0 * g;
            gi[a.i1 * W + d.i1] += a.w1 * d.w1 * g;
          }
        }
      }
  });
}

/// Zero padding by (top,bottom,left,right).
template <typename T>
Var<T> pad2d(const Var<T>& x, long pt, long pb, long pl, long pr) {
  if (pt == 0 && pb == 0 && pl == 0 && pr == 0) return x;
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  long OH = H + pt + pb, OW = W + pl + pr;
  Tensor<T> out({B, C, OH, OW});
  out.set_zero();
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c)
      for (long h = 0; h < H; ++h) {
        const T* src = x.value().data() + ((b * C + c) * H + h) * W;
        T* dst = out.data() + ((b * C + c) * OH + h + pt) * OW + pl;
        std::copy(src, src + W, dst);
      }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, H, W, OH, OW, pt, pl](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c)
        for (long h = 0; h < H; ++h) {
          const T* src = n.grad.data() + ((b * C + c) * OH + h + pt) * OW + pl;
          T* dst = gx.data() + ((b * C + c) * H + h) * W;
          for (long w = 0; w < W; ++w) dst[w] += src[w];
        }
  });
}

/// Crop a (h,w) window starting at (top,left).
template <typename T>
Var<T> crop2d(const Var<T>& x, long top, long left, long h, long w) {
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(top >= 0 && left >= 0 && top + h <= H && left + w <= W, ErrorCode::ShapeMismatch,
          "crop2d window out of bounds");
  if (top == 0 && left == 0 && h == H && w == W) return x;
  Tensor<T> out({B, C, h, w});
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c)
      for (long i = 0; i < h; ++i) {
        const T* src = x.value().data() + ((b * C + c) * H + top + i) * W + left;
        std::copy(src, src + w, out.data() + ((b * C + c) * h + i) * w);
      }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, H, W, top, left, h, w](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c)
        for (long i = 0; i < h; ++i) {
          const T* src = n.grad.data() + ((b * C + c) * h + i) * w;
          T* dst = gx.data() + ((b * C + c) * H + top + i) * W + left;
          for (long j = 0; j < w; ++j) dst[j] += src[j];
        }
  });
}

/// Paste x into an (H,W) zero canvas at (top,left).
template <typename T>
Var<T> paste2d(const Var<T>& x, long H, long W, long top, long left) {
  long B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(top >= 0 && left >= 0 && top + h <= H && left + w <= W, ErrorCode::ShapeMismatch,
          "paste2d window out of bounds");
  Tensor<T> out({B, C, H, W});
  out.set_zero();
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c)
      for (long i = 0; i < h; ++i) {
        const T* src = x.value().data() + ((b * C + c) * h + i) * w;
        std::copy(src, src + w, out.data() + ((b * C + c) * H + top + i) * W + left);
      }
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, H, W, top, left, h, w](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c)
        for (long i = 0; i < h; ++i) {
          const T* src = n.grad.data() + ((b * C + c) * H + top + i) * W + left;
          T* dst = gx.data() + ((b * C + c) * h + i) * w;
          for (long j = 0; j < w; ++j) dst[j] += src[j];
        }
  });
}

/// Concatenate along the channel axis.
template <typename T>
Var<T> concat_c(const std::vector<Var<T>>& xs) {
  require(!xs.empty(), ErrorCode::ShapeMismatch, "concat_c: empty list");
  long B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3), Ctot = 0;
  for (const auto& x : xs) {
    require(x.dim(0) == B && x.dim(2) == H && x.dim(3) == W, ErrorCode::ShapeMismatch,
            "concat_c spatial mismatch");
    Ctot += x.dim(1);
  }
  Tensor<T> out({B, Ctot, H, W});
  long HW = H * W;
  std::vector<long> offs;
  long off = 0;
  for (const auto& x : xs) {
    offs.push_back(off);
    long C = x.dim(1);
    for (long b = 0; b < B; ++b)
      std::copy(x.value().data() + b * C * HW, x.value().data() + (b + 1) * C * HW,
                out.data() + (b * Ctot + off) * HW);
    off += C;
  }
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& x : xs) parents.push_back(x.node());
  auto offp = std::make_shared<std::vector<long>>(std::move(offs));
  return make_op<T>(std::move(out), std::move(parents), [offp, B, Ctot, HW](Node<T>& n) {
    for (size_t i = 0; i < n.parents.size(); ++i) {
      auto& p = n.parents[i];
      if (!p || !p->requires_grad) continue;
      long C = p->value.dim(1), off = (*offp)[i];
      auto& gp = p->ensure_grad();
      for (long b = 0; b < B; ++b) {
        const T* src = n.grad.data() + (b * Ctot + off) * HW;
        T* dst = gp.data() + b * C * HW;
        for (long j = 0; j < C * HW; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
  return concat_c(std::vector<Var<T>>{a, b});
}

/// Channels [c0, c1) of x.
template <typename T>
Var<T> slice_c(const Var<T>& x, long c0, long c1) {
  long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  require(0 <= c0 && c0 < c1 && c1 <= C, ErrorCode::ShapeMismatch, "slice_c range");
  long Cs = c1 - c0;
  Tensor<T> out({B, Cs, x.dim(2), x.dim(3)});
  for (long b = 0; b < B; ++b)
    std::copy(x.value().data() + (b * C + c0) * HW, x.value().data() + (b * C + c1) * HW,
              out.data() + b * Cs * HW);
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, B, C, Cs, c0, HW](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (long b = 0; b < B; ++b) {
      const T* src = n.grad.data() + b * Cs * HW;
      T* dst = gx.data() + (b * C + c0) * HW;
      for (long j = 0; j < Cs * HW; ++j) dst[j] += src[j];
    }
  });
}

namespace detail {
// Shared machinery for loss-free spatial permutations: out(b,c,i,j) =
// in(b,c,map(i,j)). Each op supplies forward/backward index maps.
template <typename T, typename FwdIdx>
Tensor<T> permute_hw(const Tensor<T>& x, long OH, long OW, FwdIdx idx) {
  long B = x.dim(0), C = x.dim(1);
  long H = x.dim(2), W = x.dim(3);
  Tensor<T> out({B, C, OH, OW});
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c) {
      const T* xi = x.data() + (b * C + c) * H * W;
      T* yo = out.data() + (b * C + c) * OH * OW;
      for (long i = 0; i < OH; ++i)
        for (long j = 0; j < OW; ++j) yo[i * OW + j] = xi[idx(i, j)];
    }
  return out;
}
}  // namespace detail

/// Horizontal flip (reverses the W axis).
template <typename T>
Var<T> flip_w(const Var<T>& x) {
  long H = x.dim(2), W = x.dim(3);
  Tensor<T> out =
      detail::permute_hw(x.value(), H, W, [W](long i, long j) { return i * W + (W - 1 - j); });
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, H, W](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    Tensor<T> g = detail::permute_hw(n.grad, H, W,
                                     [W](long i, long j) { return i * W + (W - 1 - j); });
    xn->ensure_grad().flat() += g.flat();
  });
}

/// Vertical flip (reverses the H axis).
template <typename T>
Var<T> flip_h(const Var<T>& x) {
  long H = x.dim(2), W = x.dim(3);
  Tensor<T> out = detail::permute_hw(x.value(), H, W,
                                     [H, W](long i, long j) { return (H - 1 - i) * W + j; });
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, H, W](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    Tensor<T> g = detail::permute_hw(n.grad, H, W,
                                     [H, W](long i, long j) { return (H - 1 - i) * W + j; });
    xn->ensure_grad().flat() += g.flat();
  });
}

/// Transpose H and W.
template <typename T>
Var<T> transpose_hw(const Var<T>& x) {
  long H = x.dim(2), W = x.dim(3);
  Tensor<T> out =
      detail::permute_hw(x.value(), W, H, [W](long i, long j) { return j * W + i; });
  auto xn = x.node();
  return make_op<T>(std::move(out), {xn}, [xn, H, W](Node<T>& n) {
    if (!xn || !xn->requires_grad) return;
    Tensor<T> g =
        detail::permute_hw(n.grad, H, W, [H](long i, long j) { return j * H + i; });
    xn->ensure_grad().flat() += g.flat();
  });
}

/// 180-degree rotation (both axes reversed).
template <typename T>
Var<T> rot180(const Var<T>& x) {
  return flip_h(flip_w(x));
}

/// Broadcast add of a (B,C,1,1) descriptor onto a (B,C,H,W) map.
template <typename T>
Var<T> add_bcast_c(const Var<T>& x, const Var<T>& g) {
  long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  require(g.dim(0) == B && g.dim(1) == C && g.dim(2) == 1 && g.dim(3) == 1,
          ErrorCode::ShapeMismatch, "add_bcast_c gate must be (B,C,1,1)");
  Tensor<T> out(x.shape());
  for (long i = 0; i < B * C; ++i) {
    const T* xi = x.value().data() + i * HW;
    T gv = g.value()[i];
    T* yo = out.data() + i * HW;
    for (long j = 0; j < HW; ++j) yo[j] = xi[j] + gv;
  }
  auto xn = x.node(), gn = g.node();
  return make_op<T>(std::move(out), {xn, gn}, [xn, gn, B, C, HW](Node<T>& n) {
    if (xn && xn->requires_grad) xn->ensure_grad().flat() += n.grad.flat();
    if (gn && gn->requires_grad) {
      auto& gg = gn->ensure_grad();
      for (long i = 0; i < B * C; ++i) {
        const T* go = n.grad.data() + i * HW;
        T acc = T(0);
        for (long j = 0; j < HW; ++j) acc += go[j];
        gg[i] += acc;
      }
    }
  });
}

/// Layer norm over the channel axis at every (b,h,w) site. gamma/beta are (C).
template <typename T>
Var<T> layer_norm_c(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    T eps = T(1e-5)) {
  require(x.shape().rank() == 4, ErrorCode::ShapeMismatch, "layer_norm_c rank");
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), HW = H * W;
  require(gamma.dim(0) == C && beta.dim(0) == C, ErrorCode::ShapeMismatch,
          "layer_norm_c affine shape");
  Tensor<T> out(x.shape());
  auto stats = std::make_shared<Tensor<T>>(Shape{B, 2, H, W});  // mean, inv-std
  T invC = T(1) / static_cast<T>(C);
  for (long b = 0; b < B; ++b)
    for (long i = 0; i < HW; ++i) {
      const T* base = x.value().data() + b * C * HW + i;
      T mu = T(0);
      for (long c = 0; c < C; ++c) mu += base[c * HW];
      mu *= invC;
      T var = T(0);
      for (long c = 0; c < C; ++c) {
        T d = base[c * HW] - mu;
        var += d * d;
      }
      var *= invC;
      T istd = T(1) / std::sqrt(var + eps);
      (*stats)[b * 2 * HW + i] = mu;
      (*stats)[b * 2 * HW + HW + i] = istd;
      T* yo = out.data() + b * C * HW + i;
      for (long c = 0; c < C; ++c)
        yo[c * HW] = (base[c * HW] - mu) * istd * gamma.value()[c] + beta.value()[c];
    }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op<T>(std::move(out), {xn, gn, bn}, [xn, gn, bn, stats, B, C, HW, invC](Node<T>& n) {
    for (long b = 0; b < B; ++b)
      for (long i = 0; i < HW; ++i) {
        const T* base = xn->value.data() + b * C * HW + i;
        const T* go = n.grad.data() + b * C * HW + i;
        T mu = (*stats)[b * 2 * HW + i];
        T istd = (*stats)[b * 2 * HW + HW + i];
        if (gn->requires_grad || bn->requires_grad) {
          for (long c = 0; c < C; ++c) {
            T xhat = (base[c * HW] - mu) * istd;
            if (gn->requires_grad) gn->ensure_grad()[c] += go[c * HW] * xhat;
            if (bn->requires_grad) bn->ensure_grad()[c] += go[c * HW];
          }
        }
        if (xn->requires_grad) {
          T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
          for (long c = 0; c < C; ++c) {
            T xhat = (base[c * HW] - mu) * istd;
            T dxhat = go[c * HW] * gn->value[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          T* gx = xn->ensure_grad().data() + b * C * HW + i;
          for (long c = 0; c < C; ++c) {
            T xhat = (base[c * HW] - mu) * istd;
            T dxhat = go[c * HW] * gn->value[c];
            gx[c * HW] += istd * (dxhat - invC * sum_dxhat - xhat * invC * sum_dxhat_xhat);
          }
        }
      }
  });
}

}  // namespace octaseg
