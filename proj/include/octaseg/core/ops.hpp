// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "octaseg/core/autodiff.hpp"

namespace octaseg {

// Elementwise and small-vector operations. Image-structured operators
// (convolution, pooling, resampling) live in image_ops.hpp.

namespace detail {
template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}
template <typename T>
T stable_softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}
}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "add " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() + b.value().flat();
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    accumulate(an, n.grad);
    accumulate(bn, n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch, "sub shape mismatch");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() - b.value().flat();
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    accumulate(an, n.grad);
    if (bn && bn->requires_grad) bn->ensure_grad().flat() -= n.grad.flat();
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch, "mul shape mismatch");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() * b.value().flat();
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad.flat() * bn->value.flat();
    if (bn && bn->requires_grad) bn->ensure_grad().flat() += n.grad.flat() * an->value.flat();
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch, "div shape mismatch");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() / b.value().flat();
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad.flat() / bn->value.flat();
    if (bn && bn->requires_grad)
      bn->ensure_grad().flat() -= n.grad.flat() * an->value.flat() /
                                  (bn->value.flat() * bn->value.flat());
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() * c;
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an, c](Node<T>& n) {
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad.flat() * c;
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() + c;
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) { accumulate(an, n.grad); });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = detail::stable_sigmoid(a.value()[i]);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (!an || !an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (long i = 0; i < g.numel(); ++i) {
      T s = n.value[i];
      g[i] += n.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) {
    T x = a.value()[i];
    out[i] = x * detail::stable_sigmoid(x);
  }
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (!an || !an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (long i = 0; i < g.numel(); ++i) {
      T x = an->value[i];
      T s = detail::stable_sigmoid(x);
      g[i] += n.grad[i] * s * (T(1) + x * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (!an || !an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (long i = 0; i < g.numel(); ++i)
      if (an->value[i] > T(0)) g[i] += n.grad[i];
  });
}

/// PReLU with one learnable slope per channel; x is (B,C,H,W), slope is (C).
template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  require(x.shape().rank() == 4 && slope.shape().rank() == 1 && slope.dim(0) == x.dim(1),
          ErrorCode::ShapeMismatch, "prelu expects (B,C,H,W) and (C)");
  long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c) {
      T a = slope.value()[c];
      const T* xi = x.value().data() + (b * C + c) * HW;
      T* yo = out.data() + (b * C + c) * HW;
      for (long i = 0; i < HW; ++i) yo[i] = xi[i] > T(0) ? xi[i] : a * xi[i];
    }
  auto xn = x.node(), sn = slope.node();
  return make_op<T>(std::move(out), {xn, sn}, [xn, sn, B, C, HW](Node<T>& n) {
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c) {
        T a = sn->value[c];
        const T* xi = xn->value.data() + (b * C + c) * HW;
        const T* go = n.grad.data() + (b * C + c) * HW;
        if (xn->requires_grad) {
          T* gx = xn->ensure_grad().data() + (b * C + c) * HW;
          for (long i = 0; i < HW; ++i) gx[i] += go[i] * (xi[i] > T(0) ? T(1) : a);
        }
        if (sn->requires_grad) {
          T acc = T(0);
          for (long i = 0; i < HW; ++i)
            if (xi[i] <= T(0)) acc += go[i] * xi[i];
          sn->ensure_grad()[c] += acc;
        }
      }
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = detail::stable_softplus(a.value()[i]);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (!an || !an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (long i = 0; i < g.numel(); ++i)
      g[i] += n.grad[i] * detail::stable_sigmoid(an->value[i]);
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Tensor<T> out = Tensor<T>::scalar(a.value().flat().sum());
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad[0];
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  T inv = T(1) / static_cast<T>(a.value().numel());
  Tensor<T> out = Tensor<T>::scalar(a.value().flat().sum() * inv);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an, inv](Node<T>& n) {
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad[0] * inv;
  });
}

/// Broadcast multiply of a gate over a (B,C,H,W) map. Gate shape must be
/// (B,C,1,1) or (B,1,H,W). The backward reduces over the broadcast axes.
template <typename T>
Var<T> mul_gate(const Var<T>& x, const Var<T>& gate) {
  require(x.shape().rank() == 4 && gate.shape().rank() == 4, ErrorCode::ShapeMismatch,
          "mul_gate rank");
  long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  bool channel_gate = gate.dim(1) == C && gate.dim(2) == 1 && gate.dim(3) == 1;
  bool spatial_gate = gate.dim(1) == 1 && gate.dim(2) == H && gate.dim(3) == W;
  require(gate.dim(0) == B && (channel_gate || spatial_gate), ErrorCode::ShapeMismatch,
          "mul_gate: gate must be (B,C,1,1) or (B,1,H,W), got " + gate.shape().str());
  Tensor<T> out(x.shape());
  long HW = H * W;
  if (channel_gate) {
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c) {
        T g = gate.value()[b * C + c];
        const T* xi = x.value().data() + (b * C + c) * HW;
        T* yo = out.data() + (b * C + c) * HW;
        for (long i = 0; i < HW; ++i) yo[i] = xi[i] * g;
      }
  } else {
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c) {
        const T* g = gate.value().data() + b * HW;
        const T* xi = x.value().data() + (b * C + c) * HW;
        T* yo = out.data() + (b * C + c) * HW;
        for (long i = 0; i < HW; ++i) yo[i] = xi[i] * g[i];
      }
  }
  auto xn = x.node(), gn = gate.node();
  return make_op<T>(std::move(out), {xn, gn},
                    [xn, gn, B, C, HW, channel_gate](Node<T>& n) {
    for (long b = 0; b < B; ++b)
      for (long c = 0; c < C; ++c) {
        const T* go = n.grad.data() + (b * C + c) * HW;
        const T* xi = xn->value.data() + (b * C + c) * HW;
        if (channel_gate) {
          T g = gn->value[b * C + c];
          if (xn->requires_grad) {
            T* gx = xn->ensure_grad().data() + (b * C + c) * HW;
            for (long i = 0; i < HW; ++i) gx[i] += go[i] * g;
          }
          if (gn->requires_grad) {
            T acc = T(0);
            for (long i = 0; i < HW; ++i) acc += go[i] * xi[i];
            gn->ensure_grad()[b * C + c] += acc;
          }
        } else {
          const T* gv = gn->value.data() + b * HW;
          if (xn->requires_grad) {
            T* gx = xn->ensure_grad().data() + (b * C + c) * HW;
            for (long i = 0; i < HW; ++i) gx[i] += go[i] * gv[i];
          }
          if (gn->requires_grad) {
            T* gg = gn->ensure_grad().data() + b * HW;
            for (long i = 0; i < HW; ++i) gg[i] += go[i] * xi[i];
          }
        }
      }
  });
}

/// m*a + (1-m)*b, all same shape. Gradient of m is (a-b) * upstream.
template <typename T>
Var<T> lerp(const Var<T>& m, const Var<T>& a, const Var<T>& b) {
  require(m.shape() == a.shape() && a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "lerp shapes");
  Tensor<T> out(a.shape());
  out.flat() = m.value().flat() * a.value().flat() +
               (T(1) - m.value().flat()) * b.value().flat();
  auto mn = m.node(), an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {mn, an, bn}, [mn, an, bn](Node<T>& n) {
    if (mn && mn->requires_grad)
      mn->ensure_grad().flat() += n.grad.flat() * (an->value.flat() - bn->value.flat());
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad.flat() * mn->value.flat();
    if (bn && bn->requires_grad)
      bn->ensure_grad().flat() += n.grad.flat() * (T(1) - mn->value.flat());
  });
}

/// Softmax of a small weight vector (fusion logits).
template <typename T>
Var<T> softmax_vec(const Var<T>& w) {
  require(w.shape().rank() == 1, ErrorCode::ShapeMismatch, "softmax_vec expects rank-1");
  long k = w.dim(0);
  Tensor<T> out(w.shape());
  T mx = w.value().flat().maxCoeff();
  T sum = T(0);
  for (long i = 0; i < k; ++i) {
    out[i] = std::exp(w.value()[i] - mx);
    sum += out[i];
  }
  for (long i = 0; i < k; ++i) out[i] /= sum;
  auto wn = w.node();
  return make_op<T>(std::move(out), {wn}, [wn, k](Node<T>& n) {
    if (!wn || !wn->requires_grad) return;
    T dot = T(0);
    for (long i = 0; i < k; ++i) dot += n.grad[i] * n.value[i];
    auto& g = wn->ensure_grad();
    for (long i = 0; i < k; ++i) g[i] += n.value[i] * (n.grad[i] - dot);
  });
}

/// sum_i coeff[i] * xs[i] with a learnable coefficient vector (rank-1, size k).
template <typename T>
Var<T> weighted_sum(const Var<T>& coeff, const std::vector<Var<T>>& xs) {
  long k = coeff.dim(0);
  require(k == static_cast<long>(xs.size()) && k > 0, ErrorCode::ShapeMismatch,
          "weighted_sum arity");
  for (const auto& x : xs)
    require(x.shape() == xs[0].shape(), ErrorCode::ShapeMismatch, "weighted_sum shapes");
  Tensor<T> out(xs[0].shape());
  out.set_zero();
  for (long i = 0; i < k; ++i) out.flat() += xs[i].value().flat() * coeff.value()[i];
  std::vector<std::shared_ptr<Node<T>>> parents{coeff.node()};
  for (const auto& x : xs) parents.push_back(x.node());
  auto cn = coeff.node();
  return make_op<T>(std::move(out), std::move(parents), [cn, k](Node<T>& n) {
    for (long i = 0; i < k; ++i) {
      auto& xi = n.parents[static_cast<size_t>(i) + 1];
      if (cn && cn->requires_grad)
        cn->ensure_grad()[i] += (n.grad.flat() * xi->value.flat()).sum();
      if (xi && xi->requires_grad) xi->ensure_grad().flat() += n.grad.flat() * cn->value[i];
    }
  });
}

/// Same data, new shape.
template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(s);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (an && an->requires_grad) an->ensure_grad().flat() += n.grad.flat();
  });
}

/// sqrt(x + eps), elementwise.
template <typename T>
Var<T> sqrt_eps(const Var<T>& a, T eps) {
  Tensor<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = std::sqrt(a.value()[i] + eps);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](Node<T>& n) {
    if (!an || !an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * T(0.5) / n.value[i];
  });
}

/// Inverted dropout with an externally supplied keep mask (entries 0 or
/// 1/(1-rate)). The caller decides train/eval; eval passes no-op by skipping.
template <typename T>
Var<T> dropout_mask(const Var<T>& x, const Tensor<T>& mask) {
  require(x.shape() == mask.shape(), ErrorCode::ShapeMismatch, "dropout mask shape");
  Tensor<T> out(x.shape());
  out.flat() = x.value().flat() * mask.flat();
  auto xn = x.node();
  auto mcopy = std::make_shared<Tensor<T>>(mask);
  return make_op<T>(std::move(out), {xn}, [xn, mcopy](Node<T>& n) {
    if (xn && xn->requires_grad) xn->ensure_grad().flat() += n.grad.flat() * mcopy->flat();
  });
}

}  // namespace octaseg
