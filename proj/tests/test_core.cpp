// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "octaseg/core/autodiff.hpp"
#include "octaseg/core/image_ops.hpp"
#include "octaseg/core/ops.hpp"
#include "octaseg/core/rng.hpp"
#include "octaseg/core/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace octaseg;
using octaseg::testing::gradcheck;
using octaseg::testing::project;
using octaseg::testing::rand_tensor;

namespace {

// Direct-definition convolution used as an oracle against the GEMM path.
Tensor<double> conv_ref(const Tensor<double>& x, const Tensor<double>& w,
                        const Tensor<double>& b, long stride, long ph, long pw, long dh,
                        long dw, long groups) {
  long B = x.dim(0), H = x.dim(2), W = x.dim(3);
  long Cout = w.dim(0), Cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  long OH = conv_out_dim(H, kh, stride, ph, dh), OW = conv_out_dim(W, kw, stride, pw, dw);
  long Og = Cout / groups;
  Tensor<double> y({B, Cout, OH, OW});
  for (long bi = 0; bi < B; ++bi)
    for (long co = 0; co < Cout; ++co) {
      long g = co / Og;
      for (long oh = 0; oh < OH; ++oh)
        for (long ow = 0; ow < OW; ++ow) {
          double acc = b[co];
          for (long ci = 0; ci < Cg; ++ci)
            for (long ki = 0; ki < kh; ++ki)
              for (long kj = 0; kj < kw; ++kj) {
                long ih = oh * stride - ph + ki * dh;
                long iw = ow * stride - pw + kj * dw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at(bi, g * Cg + ci, ih, iw) * w.at(co, ci, ki, kj);
              }
          y.at(bi, co, oh, ow) = acc;
        }
    }
  return y;
}

}  // namespace

TEST_CASE("shape and tensor basics") {
  Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  CHECK(s.str() == "(2,3,4,5)");
  Tensor<double> t(s);
  CHECK(t.numel() == 120);
  t.at(1, 2, 3, 4) = 7.0;
  CHECK(t[119] == 7.0);
  Tensor<double> r = t.reshaped(Shape{120});
  CHECK(r.dim(0) == 120);
  CHECK(r[119] == 7.0);
  CHECK_THROWS_AS((void)t.reshaped(Shape{7}), Error);
  CHECK(t.all_finite());
  t[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK(!t.all_finite());
}

TEST_CASE("error carries its code") {
  try {
    fail(ErrorCode::RoiTooLarge, "roi 512 exceeds image 304");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RoiTooLarge);
    CHECK(std::string(e.what()).find("304") != std::string::npos);
  }
}

TEST_CASE("rng derivation is deterministic and tag-sensitive") {
  Rng a = Rng::derive(0, "aug", 3, 14);
  Rng b = Rng::derive(0, "aug", 3, 14);
  Rng c = Rng::derive(0, "aug", 3, 15);
  double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
  CHECK(va == vb);
  CHECK(va != vc);
  Tensor<float> t1({4, 4}), t2({4, 4});
  Rng r1(9), r2(9);
  r1.fill_normal(t1, 0, 1);
  r2.fill_normal(t2, 0, 1);
  CHECK(hash_tensor(t1) == hash_tensor(t2));
}

TEST_CASE("kaiming uniform bound") {
  Rng rng(1);
  auto w = kaiming_uniform<double>(rng, Shape{16, 8, 3, 3}, 8 * 3 * 3);
  double bound = std::sqrt(6.0 / 72.0);
  CHECK(w.max_abs() <= bound);
  CHECK(w.max_abs() > 0.5 * bound);
}

TEST_CASE("autodiff chain and fan-out accumulation") {
  auto x = Var<double>::param(Tensor<double>(Shape{3}, {1.0, -2.0, 3.0}));
  auto y = sum_all(mul(x, x));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));

  // Diamond: z = a*a + a where a = 2x. dz/dx = (2a + 1)*2.
  auto x2 = Var<double>::param(Tensor<double>(Shape{1}, {1.5}));
  auto a = scale(x2, 2.0);
  auto z = sum_all(add(mul(a, a), a));
  backward(z);
  CHECK(x2.grad()[0] == doctest::Approx((2 * 3.0 + 1) * 2));
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Var<double>::param(Tensor<double>(Shape{2}, {1.0, 2.0}));
  {
    GradMode::NoGradGuard off;
    auto y = mul(x, x);
    CHECK(!y.node()->requires_grad);
    CHECK(y.node()->parents.empty());
  }
  auto y = mul(x, x);
  CHECK(y.node()->requires_grad);
}

TEST_CASE("detach cuts the graph") {
  auto x = Var<double>::param(Tensor<double>(Shape{2}, {1.0, 2.0}));
  auto y = mul(x, x).detach();
  auto z = sum_all(mul(y, x));
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(1.0));  // only the direct factor
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("elementwise op gradients") {
  auto x0 = rand_tensor(Shape{2, 3, 4, 4}, 21);
  auto check_unary = [&](auto op, double lo = -1, double hi = 1, std::uint64_t seed = 21) {
    auto x = Var<double>::param(rand_tensor(Shape{2, 3, 4, 4}, seed, lo, hi));
    double err = gradcheck([&] { return project(op(x)); }, {x});
    CHECK(err < 1e-6);
  };
  check_unary([](const Var<double>& v) { return sigmoid(v); });
  check_unary([](const Var<double>& v) { return silu(v); });
  check_unary([](const Var<double>& v) { return softplus(v); });
  check_unary([](const Var<double>& v) { return scale(v, -1.7); });
  check_unary([](const Var<double>& v) { return add_scalar(v, 0.3); });
  check_unary([](const Var<double>& v) { return sqrt_eps(v, 1e-3); }, 0.1, 2.0);
  // relu away from the kink
  check_unary([](const Var<double>& v) { return relu(add_scalar(v, 3.0)); });

  auto a = Var<double>::param(rand_tensor(Shape{3, 5}, 22));
  auto b = Var<double>::param(rand_tensor(Shape{3, 5}, 23));
  CHECK(gradcheck([&] { return project(add(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return project(sub(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return project(mul(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return mean_all(mul(a, b)); }, {a, b}) < 1e-6);
}

TEST_CASE("prelu forward and gradient") {
  auto x = Var<double>::param(rand_tensor(Shape{2, 3, 4, 4}, 31));
  auto s = Var<double>::param(Tensor<double>(Shape{3}, {0.1, 0.2, 0.3}));
  auto y = prelu(x, s);
  for (long b = 0; b < 2; ++b)
    for (long c = 0; c < 3; ++c)
      for (long h = 0; h < 4; ++h)
        for (long w = 0; w < 4; ++w) {
          double xv = x.value().at(b, c, h, w);
          double expect = xv > 0 ? xv : s.value()[c] * xv;
          CHECK(y.value().at(b, c, h, w) == doctest::Approx(expect));
        }
  CHECK(gradcheck([&] { return project(prelu(x, s)); }, {x, s}) < 1e-5);
}

TEST_CASE("mul_gate broadcasts and reduces") {
  auto x = Var<double>::param(rand_tensor(Shape{2, 3, 4, 5}, 41));
  auto gc = Var<double>::param(rand_tensor(Shape{2, 3, 1, 1}, 42));
  auto gs = Var<double>::param(rand_tensor(Shape{2, 1, 4, 5}, 43));
  auto yc = mul_gate(x, gc);
  CHECK(yc.value().at(1, 2, 3, 4) ==
        doctest::Approx(x.value().at(1, 2, 3, 4) * gc.value().at(1, 2, 0, 0)));
  auto ys = mul_gate(x, gs);
  CHECK(ys.value().at(1, 2, 3, 4) ==
        doctest::Approx(x.value().at(1, 2, 3, 4) * gs.value().at(1, 0, 3, 4)));
  CHECK(gradcheck([&] { return project(mul_gate(x, gc)); }, {x, gc}) < 1e-6);
  CHECK(gradcheck([&] { return project(mul_gate(x, gs)); }, {x, gs}) < 1e-6);
  CHECK_THROWS_AS(mul_gate(x, Var<double>::leaf(Tensor<double>(Shape{2, 2, 1, 1}))), Error);
}

TEST_CASE("lerp is a convex combination") {
  auto m = Var<double>::param(rand_tensor(Shape{2, 8}, 51, 0.0, 1.0));
  auto a = Var<double>::param(rand_tensor(Shape{2, 8}, 52));
  auto b = Var<double>::param(rand_tensor(Shape{2, 8}, 53));
  auto y = lerp(m, a, b);
  CHECK(y.value()[3] ==
        doctest::Approx(m.value()[3] * a.value()[3] + (1 - m.value()[3]) * b.value()[3]));
  CHECK(gradcheck([&] { return project(lerp(m, a, b)); }, {m, a, b}) < 1e-6);
}

TEST_CASE("softmax_vec normalizes and differentiates") {
  auto w = Var<double>::param(Tensor<double>(Shape{3}, {0.5, 0.5, 0.5}));
  auto s = softmax_vec(w);
  CHECK(s.value()[0] == doctest::Approx(1.0 / 3));
  CHECK(s.value().sum() == doctest::Approx(1.0));
  auto w2 = Var<double>::param(rand_tensor(Shape{4}, 61));
  CHECK(gradcheck([&] { return project(softmax_vec(w2)); }, {w2}) < 1e-6);
}

TEST_CASE("weighted_sum matches manual expansion") {
  auto c = Var<double>::param(Tensor<double>(Shape{3}, {0.2, 0.5, 0.3}));
  std::vector<Var<double>> xs;
  for (int i = 0; i < 3; ++i)
    xs.push_back(Var<double>::param(rand_tensor(Shape{2, 4}, 70 + static_cast<unsigned>(i))));
  auto y = weighted_sum(c, xs);
  double manual = 0.2 * xs[0].value()[5] + 0.5 * xs[1].value()[5] + 0.3 * xs[2].value()[5];
  CHECK(y.value()[5] == doctest::Approx(manual));
  CHECK(gradcheck([&] { return project(weighted_sum(c, xs)); },
                  {c, xs[0], xs[1], xs[2]}) < 1e-6);
}

TEST_CASE("dropout_mask applies the mask verbatim") {
  auto x = Var<double>::param(rand_tensor(Shape{2, 8}, 81));
  Tensor<double> mask(Shape{2, 8});
  Rng rng(82);
  for (long i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(0.5) ? 2.0 : 0.0;
  auto y = dropout_mask(x, mask);
  for (long i = 0; i < mask.numel(); ++i)
    CHECK(y.value()[i] == doctest::Approx(x.value()[i] * mask[i]));
  CHECK(gradcheck([&] { return project(dropout_mask(x, mask)); }, {x}) < 1e-6);
}

TEST_CASE("conv2d matches the direct-definition oracle") {
  struct Cfg {
    long B, Cin, H, W, Cout, kh, kw, stride, ph, pw, dh, dw, groups;
  };
  std::vector<Cfg> cfgs = {
      {2, 3, 7, 8, 4, 3, 3, 1, 1, 1, 1, 1, 1},   // plain 3x3 same
      {1, 4, 9, 9, 6, 3, 3, 2, 1, 1, 1, 1, 1},   // strided downsample
      {1, 2, 8, 8, 2, 1, 9, 1, 0, 4, 1, 1, 1},   // 1x9 directional
      {1, 2, 8, 8, 2, 9, 1, 1, 4, 0, 1, 1, 1},   // 9x1 directional
      {1, 4, 10, 10, 4, 3, 3, 1, 2, 2, 2, 2, 4}, // depthwise dilated
      {1, 4, 12, 12, 8, 7, 7, 1, 6, 6, 2, 2, 2}, // grouped 7x7 dilation 2
      {2, 5, 6, 6, 3, 1, 1, 1, 0, 0, 1, 1, 1},   // pointwise
  };
  int idx = 0;
  for (const auto& c : cfgs) {
    CAPTURE(idx);
    auto x = Var<double>::param(rand_tensor(Shape{c.B, c.Cin, c.H, c.W},
                                            100 + static_cast<unsigned>(idx)));
    auto w = Var<double>::param(rand_tensor(Shape{c.Cout, c.Cin / c.groups, c.kh, c.kw},
                                            200 + static_cast<unsigned>(idx)));
    auto b = Var<double>::param(rand_tensor(Shape{c.Cout}, 300 + static_cast<unsigned>(idx)));
    auto y = conv2d(x, w, b, c.stride, c.ph, c.pw, c.dh, c.dw, c.groups);
    Tensor<double> ref =
        conv_ref(x.value(), w.value(), b.value(), c.stride, c.ph, c.pw, c.dh, c.dw, c.groups);
    CHECK(y.shape() == ref.shape());
    CHECK(max_abs_diff(y.value(), ref) < 1e-10);
    double err = gradcheck(
        [&] { return project(conv2d(x, w, b, c.stride, c.ph, c.pw, c.dh, c.dw, c.groups)); },
        {x, w, b}, 1e-5, 60);
    CHECK(err < 1e-6);
    ++idx;
  }
}

TEST_CASE("pooling operators") {
  SUBCASE("global average and max") {
    auto x = Var<double>::param(rand_tensor(Shape{2, 3, 4, 4}, 401));
    auto ga = global_avg_pool(x);
    double manual = 0;
    for (long h = 0; h < 4; ++h)
      for (long w = 0; w < 4; ++w) manual += x.value().at(1, 2, h, w);
    CHECK(ga.value().at(1, 2, 0, 0) == doctest::Approx(manual / 16));
    auto gm = global_max_pool(x);
    double mx = -1e30;
    for (long h = 0; h < 4; ++h)
      for (long w = 0; w < 4; ++w) mx = std::max(mx, x.value().at(1, 2, h, w));
    CHECK(gm.value().at(1, 2, 0, 0) == doctest::Approx(mx));
    CHECK(gradcheck([&] { return project(global_avg_pool(x)); }, {x}) < 1e-6);
    CHECK(gradcheck([&] { return project(global_max_pool(x)); }, {x}) < 1e-6);
  }
  SUBCASE("adaptive average pool on exact divisors") {
    auto x = Var<double>::param(rand_tensor(Shape{1, 2, 4, 4}, 402));
    auto y = adaptive_avg_pool(x, 2, 2);
    double manual = (x.value().at(0, 1, 2, 2) + x.value().at(0, 1, 2, 3) +
                     x.value().at(0, 1, 3, 2) + x.value().at(0, 1, 3, 3)) /
                    4;
    CHECK(y.value().at(0, 1, 1, 1) == doctest::Approx(manual));
    auto x2 = Var<double>::param(rand_tensor(Shape{1, 2, 7, 5}, 403));
    CHECK(gradcheck([&] { return project(adaptive_avg_pool(x2, 4, 4)); }, {x2}) < 1e-6);
  }
  SUBCASE("3x3 stride-1 same pooling clamps to valid") {
    auto x = Var<double>::param(rand_tensor(Shape{1, 1, 3, 3}, 404));
    auto avg = pool_same(x, 3, false);
    double corner = (x.value().at(0, 0, 0, 0) + x.value().at(0, 0, 0, 1) +
                     x.value().at(0, 0, 1, 0) + x.value().at(0, 0, 1, 1)) /
                    4;
    CHECK(avg.value().at(0, 0, 0, 0) == doctest::Approx(corner));
    double center = 0;
    for (long i = 0; i < 9; ++i) center += x.value()[i];
    CHECK(avg.value().at(0, 0, 1, 1) == doctest::Approx(center / 9));
    auto mx = pool_same(x, 3, true);
    CHECK(mx.value().at(0, 0, 1, 1) == doctest::Approx(x.value().flat().maxCoeff()));
    CHECK(gradcheck([&] { return project(pool_same(x, 3, false)); }, {x}) < 1e-6);
    CHECK(gradcheck([&] { return project(pool_same(x, 3, true)); }, {x}) < 1e-6);
  }
  SUBCASE("channel stats") {
    auto x = Var<double>::param(rand_tensor(Shape{2, 4, 3, 3}, 405));
    auto y = channel_stats(x);
    CHECK(y.dim(1) == 2);
    double mean = 0, mx = -1e30;
    for (long c = 0; c < 4; ++c) {
      mean += x.value().at(1, c, 2, 1);
      mx = std::max(mx, x.value().at(1, c, 2, 1));
    }
    CHECK(y.value().at(1, 0, 2, 1) == doctest::Approx(mean / 4));
    CHECK(y.value().at(1, 1, 2, 1) == doctest::Approx(mx));
    CHECK(gradcheck([&] { return project(channel_stats(x)); }, {x}) < 1e-6);
  }
}

TEST_CASE("bilinear resize") {
  auto c = Var<double>::leaf(Tensor<double>::full(Shape{1, 1, 3, 3}, 2.5));
  auto up = bilinear_resize(c, 7, 7);
  CHECK(up.value().max_abs() == doctest::Approx(2.5));
  CHECK(up.value().flat().minCoeff() == doctest::Approx(2.5));

  auto x = Var<double>::param(rand_tensor(Shape{1, 2, 5, 6}, 501));
  CHECK(gradcheck([&] { return project(bilinear_resize(x, 10, 12)); }, {x}) < 1e-6);
  CHECK(gradcheck([&] { return project(bilinear_resize(x, 3, 3)); }, {x}) < 1e-6);

  // 2x upsample of a 2x2 map, half-pixel convention: exact corner values.
  auto q = Var<double>::leaf(Tensor<double>(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  auto u = bilinear_resize(q, 4, 4);
  CHECK(u.value().at(0, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(u.value().at(0, 0, 3, 3) == doctest::Approx(4.0));
  CHECK(u.value().at(0, 0, 1, 1) == doctest::Approx(1.0 * 0.5625 + 2.0 * 0.1875 +
                                                    3.0 * 0.1875 + 4.0 * 0.0625));
}

TEST_CASE("pad, crop, paste round-trips") {
  auto x = Var<double>::param(rand_tensor(Shape{1, 2, 5, 4}, 601));
  auto p = pad2d(x, 1, 2, 3, 0);
  CHECK(p.dim(2) == 8);
  CHECK(p.dim(3) == 7);
  CHECK(p.value().at(0, 0, 0, 0) == 0.0);
  auto back = crop2d(p, 1, 3, 5, 4);
  CHECK(max_abs_diff(back.value(), x.value()) == 0.0);
  CHECK(gradcheck([&] { return project(crop2d(pad2d(x, 1, 2, 3, 0), 0, 0, 6, 7)); }, {x}) <
        1e-6);

  auto small = Var<double>::param(rand_tensor(Shape{1, 1, 2, 2}, 602));
  auto canvas = paste2d(small, 6, 6, 2, 2);
  CHECK(canvas.value().at(0, 0, 2, 2) == small.value().at(0, 0, 0, 0));
  CHECK(canvas.value().at(0, 0, 0, 0) == 0.0);
  double border_sum = 0;
  for (long h = 0; h < 6; ++h)
    for (long w = 0; w < 6; ++w)
      if (h < 2 || h >= 4 || w < 2 || w >= 4) border_sum += std::abs(canvas.value().at(0, 0, h, w));
  CHECK(border_sum == 0.0);
  CHECK(gradcheck([&] { return project(paste2d(small, 6, 6, 2, 2)); }, {small}) < 1e-6);
  CHECK_THROWS_AS(paste2d(small, 3, 3, 2, 2), Error);
}

TEST_CASE("concat and slice are inverses") {
  auto a = Var<double>::param(rand_tensor(Shape{2, 3, 4, 4}, 701));
  auto b = Var<double>::param(rand_tensor(Shape{2, 2, 4, 4}, 702));
  auto cat = concat_c(a, b);
  CHECK(cat.dim(1) == 5);
  auto a2 = slice_c(cat, 0, 3);
  auto b2 = slice_c(cat, 3, 5);
  CHECK(max_abs_diff(a2.value(), a.value()) == 0.0);
  CHECK(max_abs_diff(b2.value(), b.value()) == 0.0);
  CHECK(gradcheck([&] { return project(concat_c(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return project(slice_c(concat_c(a, b), 2, 4)); }, {a, b}) < 1e-6);
}

TEST_CASE("spatial permutations") {
  auto x = Var<double>::param(rand_tensor(Shape{1, 2, 3, 4}, 801));
  auto fw = flip_w(x);
  CHECK(fw.value().at(0, 1, 2, 0) == x.value().at(0, 1, 2, 3));
  CHECK(max_abs_diff(flip_w(fw).value(), x.value()) == 0.0);
  auto fh = flip_h(x);
  CHECK(fh.value().at(0, 1, 0, 2) == x.value().at(0, 1, 2, 2));
  auto tr = transpose_hw(x);
  CHECK(tr.dim(2) == 4);
  CHECK(tr.dim(3) == 3);
  CHECK(tr.value().at(0, 1, 3, 2) == x.value().at(0, 1, 2, 3));
  CHECK(max_abs_diff(transpose_hw(tr).value(), x.value()) == 0.0);
  auto r = rot180(x);
  CHECK(r.value().at(0, 0, 0, 0) == x.value().at(0, 0, 2, 3));
  CHECK(gradcheck([&] { return project(flip_w(x)); }, {x}) < 1e-6);
  CHECK(gradcheck([&] { return project(flip_h(x)); }, {x}) < 1e-6);
  CHECK(gradcheck([&] { return project(transpose_hw(x)); }, {x}) < 1e-6);
}

TEST_CASE("layer norm over channels") {
  long B = 2, C = 8, H = 3, W = 3;
  auto x = Var<double>::param(rand_tensor(Shape{B, C, H, W}, 901, -2, 2));
  auto gamma = Var<double>::param(Tensor<double>::ones(Shape{C}));
  auto beta = Var<double>::param(Tensor<double>::zeros(Shape{C}));
  auto y = layer_norm_c(x, gamma, beta);
  for (long b = 0; b < B; ++b)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        double mu = 0, var = 0;
        for (long c = 0; c < C; ++c) mu += y.value().at(b, c, h, w);
        mu /= C;
        for (long c = 0; c < C; ++c) {
          double d = y.value().at(b, c, h, w) - mu;
          var += d * d;
        }
        var /= C;
        CHECK(std::abs(mu) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
      }
  auto g2 = Var<double>::param(rand_tensor(Shape{C}, 902, 0.5, 1.5));
  auto b2 = Var<double>::param(rand_tensor(Shape{C}, 903, -0.5, 0.5));
  CHECK(gradcheck([&] { return project(layer_norm_c(x, g2, b2)); }, {x, g2, b2}, 1e-5, 120) <
        1e-5);
  // zero gamma collapses output to beta
  auto zg = Var<double>::leaf(Tensor<double>::zeros(Shape{C}));
  auto zb = Var<double>::leaf(Tensor<double>::zeros(Shape{C}));
  auto zy = layer_norm_c(x, zg, zb);
  CHECK(zy.value().max_abs() == 0.0);
}

TEST_CASE("param registry ordering, count, hash") {
  ParamRegistry<float> reg;
  auto w1 = reg.add("stem.w", Tensor<float>::ones(Shape{4, 1, 3, 3}));
  auto w2 = reg.add("stem.b", Tensor<float>::zeros(Shape{4}));
  CHECK(reg.count_scalars() == 4 * 9 + 4);
  CHECK(reg.entries()[0].name == "stem.w");
  CHECK(reg.contains("stem.b"));
  CHECK_THROWS_AS(reg.add("stem.w", Tensor<float>::zeros(Shape{1})), Error);
  std::uint64_t h1 = reg.value_hash();
  w1.value()[0] = 2.0f;
  CHECK(reg.value_hash() != h1);
  (void)w2;
}
