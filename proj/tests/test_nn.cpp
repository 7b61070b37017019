// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "octaseg/nn/hdfe.hpp"
#include "octaseg/nn/vmaf.hpp"
#include "support/gradcheck.hpp"

using namespace octaseg;
using testing::gradcheck;
using testing::project;
using testing::rand_tensor;

namespace {

Var<double> randx(Shape s, std::uint64_t seed) {
  return Var<double>::param(rand_tensor(s, seed));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("se gate is channel-constant, in (0,1), zero-channel preserving") {
  ParamRegistry<double> reg;
  Rng rng(3);
  SEBlock<double> se(reg, "se", rng, 8, 4);
  auto x = randx({2, 8, 5, 5}, 10);
  // zero out channel 2 of batch 0
  for (long i = 0; i < 25; ++i) x.value().at(0, 2, i / 5, i % 5) = 0;
  auto y = se(x);
  CHECK(y.shape() == x.shape());
  for (long i = 0; i < x.value().numel(); ++i)
    CHECK(std::abs(y.value()[i]) <= std::abs(x.value()[i]) + 1e-12);
  for (long i = 0; i < 25; ++i) CHECK(y.value().at(0, 2, i / 5, i % 5) == 0.0);
  // the per-channel ratio must be spatially constant
  for (long c = 0; c < 8; ++c) {
    double r0 = y.value().at(1, c, 0, 0) / x.value().at(1, c, 0, 0);
    CHECK(r0 > 0.0);
    CHECK(r0 < 1.0);
    for (long i = 0; i < 25; ++i)
      CHECK(y.value().at(1, c, i / 5, i % 5) ==
            doctest::Approx(r0 * x.value().at(1, c, i / 5, i % 5)).epsilon(1e-10));
  }
  ParamRegistry<double> reg2;
  CHECK_THROWS_WITH_AS(SEBlock<double>(reg2, "t", rng, 2, 4), doctest::Contains("channels"),
                       Error);
}

TEST_CASE("eca adaptive kernel size") {
  CHECK(eca_kernel_size(32) == 3);
  CHECK(eca_kernel_size(64) == 3);
  CHECK(eca_kernel_size(256) == 5);
  CHECK(eca_kernel_size(8) == 3);
  for (long c : {8L, 16L, 32L, 64L, 128L, 256L, 512L}) CHECK(eca_kernel_size(c) % 2 == 1);
}

TEST_CASE("eca gates in (0,1) and zero channel stays zero") {
  ParamRegistry<double> reg;
  Rng rng(5);
  ECABlock<double> eca(reg, "eca", rng, 32);
  auto x = randx({1, 32, 4, 4}, 11);
  for (long i = 0; i < 16; ++i) x.value().at(0, 7, i / 4, i % 4) = 0;
  auto y = eca(x);
  CHECK(y.shape() == x.shape());
  for (long i = 0; i < 16; ++i) CHECK(y.value().at(0, 7, i / 4, i % 4) == 0.0);
  for (long i = 0; i < x.value().numel(); ++i)
    CHECK(std::abs(y.value()[i]) < std::abs(x.value()[i]) + 1e-12);
}

TEST_CASE("ghost module channel split and parameter economy") {
  ParamRegistry<double> reg;
  Rng rng(7);
  GhostBlock<double> g(reg, "g", rng, 16, 32);
  auto y = g(randx({2, 16, 6, 6}, 12));
  CHECK(y.shape() == Shape{2, 32, 6, 6});
  // primary 1x1: 16*16*1*1 + 16; cheap depthwise 3x3 over 16: 16*1*3*3 + 16
  long expected = 16 * 16 + 16 + 16 * 9 + 16;
  CHECK(reg.count_scalars() == expected);
  long plain = 32 * 16 * 9 + 32;
  CHECK(reg.count_scalars() < plain);
  ParamRegistry<double> reg2;
  CHECK_THROWS_AS(GhostBlock<double>(reg2, "t", rng, 16, 7), Error);
}

TEST_CASE("ghost zero input maps to zero at default init") {
  ParamRegistry<double> reg;
  Rng rng(9);
  GhostBlock<double> g(reg, "g", rng, 8, 8);
  auto y = g(Var<double>::leaf(Tensor<double>({1, 8, 4, 4})));
  for (long i = 0; i < y.value().numel(); ++i) CHECK(y.value()[i] == 0.0);
}

TEST_CASE("dsconv offset mode at zero offsets matches plain mode") {
  for (auto orient : {DsconvOrientation::Horizontal, DsconvOrientation::Vertical}) {
    ParamRegistry<double> rp, ro;
    Rng rng1(21), rng2(21);
    DsconvDirectional<double> plain(rp, "d", rng1, 4, orient, DsconvMode::Plain);
    DsconvDirectional<double> off(ro, "d", rng2, 4, orient, DsconvMode::Offset);
    // same seed -> identical conv weights; offsets start at zero
    auto x = randx({2, 4, 9, 9}, 30);
    auto yp = plain(x), yo = off(x);
    CHECK(max_abs_diff(yp.value(), yo.value()) < 1e-6);
  }
}

TEST_CASE("dsconv 1x7 is constant along rows for row-constant input") {
  ParamRegistry<double> reg;
  Rng rng(23);
  DsconvDirectional<double> d(reg, "d", rng, 2, DsconvOrientation::Horizontal,
                              DsconvMode::Plain);
  Tensor<double> xt({1, 2, 6, 16});
  Rng r2(31);
  for (long c = 0; c < 2; ++c)
    for (long h = 0; h < 6; ++h) {
      double v = r2.uniform(-1, 1);
      for (long w = 0; w < 16; ++w) xt.at(0, c, h, w) = v;
    }
  auto y = d(Var<double>::leaf(std::move(xt)));
  // interior columns (away from padding) share one value per row
  for (long c = 0; c < 2; ++c)
    for (long h = 0; h < 6; ++h)
      for (long w = 4; w < 12; ++w)
        CHECK(y.value().at(0, c, h, w) == doctest::Approx(y.value().at(0, c, h, 4)));
}

TEST_CASE("dsconv offset path gradcheck") {
  ParamRegistry<double> reg;
  Rng rng(25);
  DsconvDirectional<double> d(reg, "d", rng, 2, DsconvOrientation::Vertical,
                              DsconvMode::Offset);
  // move offsets off the integer grid so the bilinear path is exercised
  auto offs = reg.find("d.offsets");
  Rng r3(41);
  r3.fill_uniform(offs.value(), -0.7, 0.7);
  auto x = randx({1, 2, 8, 8}, 42);
  std::vector<Var<double>> checks{x, offs, reg.find("d.conv.w"), reg.find("d.conv.b")};
  double err = gradcheck([&] { return project(d(x)); }, checks);
  CHECK(err < 1e-5);
}

TEST_CASE("aff convex fusion endpoints") {
  ParamRegistry<double> reg;
  Rng rng(27);
  AFFBlock<double> aff(reg, "aff", rng, 8);
  auto skip = randx({2, 8, 5, 5}, 50), up = randx({2, 8, 5, 5}, 51);

  SUBCASE("equal inputs pass through") {
    auto y = aff(skip, skip);
    CHECK(max_abs_diff(y.value(), skip.value()) < 1e-12);
  }
  SUBCASE("m forced to the endpoints") {
    // huge positive bias on both attention towers -> m ~ 1 -> skip wins
    for (const char* b : {"aff.local2.b", "aff.global2.b"}) {
      auto t = reg.find(b);
      for (long i = 0; i < t.value().numel(); ++i) t.value()[i] = 200.0;
    }
    CHECK(max_abs_diff(aff(skip, up).value(), skip.value()) < 1e-9);
    for (const char* b : {"aff.local2.b", "aff.global2.b"}) {
      auto t = reg.find(b);
      for (long i = 0; i < t.value().numel(); ++i) t.value()[i] = -200.0;
    }
    CHECK(max_abs_diff(aff(skip, up).value(), up.value()) < 1e-9);
  }
  SUBCASE("fused value stays between the inputs") {
    auto y = aff(skip, up);
    for (long i = 0; i < y.value().numel(); ++i) {
      double lo = std::min(skip.value()[i], up.value()[i]);
      double hi = std::max(skip.value()[i], up.value()[i]);
      CHECK(y.value()[i] >= lo - 1e-12);
      CHECK(y.value()[i] <= hi + 1e-12);
    }
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(aff(skip, randx({2, 8, 4, 5}, 52)), Error);
  }
}

TEST_CASE("cmbf stem shapes and zero input") {
  ParamRegistry<double> reg;
  Rng rng(29);
  CMBFBlock<double> cmbf(reg, "cmbf", rng, 1, 32);
  auto y = cmbf(randx({2, 1, 16, 16}, 60));
  CHECK(y.shape() == Shape{2, 32, 16, 16});

  auto z = cmbf(Var<double>::leaf(Tensor<double>({1, 1, 8, 8})));
  for (long i = 0; i < z.value().numel(); ++i) CHECK(z.value()[i] == 0.0);

  ParamRegistry<double> reg2;
  CMBFBlock<double> c16(reg2, "c", rng, 3, 16);
  CHECK(c16(randx({1, 3, 7, 9}, 61)).shape() == Shape{1, 16, 7, 9});
}

TEST_CASE("vcab channel gate") {
  ParamRegistry<double> reg;
  Rng rng(33);
  VCAB<double> vcab(reg, "vcab", rng);
  auto x = randx({2, 8, 6, 6}, 70);
  auto g = vcab(x);
  CHECK(g.shape() == Shape{2, 8, 1, 1});
  for (long i = 0; i < g.value().numel(); ++i) {
    CHECK(g.value()[i] > 0.0);
    CHECK(g.value()[i] < 1.0);
  }
  auto gc = vcab(Var<double>::leaf(Tensor<double>(Shape{1, 8, 6, 6}, 0.37)));
  for (long i = 0; i < gc.value().numel(); ++i) CHECK(std::isfinite(gc.value()[i]));
}

TEST_CASE("vsab spatial gate, bright-row response, transpose tie") {
  ParamRegistry<double> reg;
  Rng rng(35);
  VSAB<double> vsab(reg, "vsab", rng, true);
  auto x = randx({1, 4, 12, 12}, 80);
  auto g = vsab(x);
  CHECK(g.shape() == Shape{1, 1, 12, 12});
  for (long i = 0; i < g.value().numel(); ++i) {
    CHECK(g.value()[i] > 0.0);
    CHECK(g.value()[i] < 1.0);
  }

  SUBCASE("diagonal branch requires a square input") {
    CHECK_THROWS_WITH_AS(vsab(randx({1, 4, 8, 10}, 81)), doctest::Contains("H == W"), Error);
    ParamRegistry<double> reg2;
    VSAB<double> nodiag(reg2, "v", rng, false);
    CHECK(nodiag(randx({1, 4, 8, 10}, 82)).shape() == Shape{1, 1, 8, 10});
  }

  SUBCASE("bright row raises the horizontal branch response on that row") {
    Tensor<double> bright({1, 4, 12, 12});
    for (long c = 0; c < 4; ++c)
      for (long w = 0; w < 12; ++w) bright.at(0, c, 5, w) = 3.0;
    auto hw = reg.find("vsab.hor.w"), hb = reg.find("vsab.hor.b");
    auto resp = [&](Tensor<double> img) {
      auto s = channel_stats(Var<double>::leaf(std::move(img)));
      auto h = conv2d(s, hw, hb, 1, 0, 4);
      double m = 0;
      for (long w = 0; w < 12; ++w) m += std::abs(h.value().at(0, 0, 5, w));
      return m;
    };
    CHECK(resp(bright) > resp(Tensor<double>({1, 4, 12, 12})));
  }

  SUBCASE("vertical branch on transposed input mirrors horizontal branch") {
    auto hw = reg.find("vsab.hor.w");
    auto vw = reg.find("vsab.ver.w");
    // tie: ver kernel (1,2,9,1) = transpose of hor kernel (1,2,1,9)
    for (long c = 0; c < 2; ++c)
      for (long k = 0; k < 9; ++k) vw.value().at(0, c, k, 0) = hw.value().at(0, c, 0, k);
    auto vb = reg.find("vsab.ver.b");
    vb.value()[0] = reg.find("vsab.hor.b").value()[0];
    auto s = channel_stats(x);
    auto hout = conv2d(s, hw, reg.find("vsab.hor.b"), 1, 0, 4);
    auto vout = conv2d(transpose_hw(s), vw, vb, 1, 4, 0);
    CHECK(max_abs_diff(transpose_hw(hout).value(), vout.value()) < 1e-12);
  }
}

TEST_CASE("vstab structural gate and branch gradients") {
  ParamRegistry<double> reg;
  Rng rng(37);
  VSTAB<double> vstab(reg, "vstab", rng, 4);
  auto x = randx({2, 4, 7, 7}, 90);
  auto g = vstab(x);
  CHECK(g.shape() == Shape{2, 1, 7, 7});
  for (long i = 0; i < g.value().numel(); ++i) {
    CHECK(g.value()[i] > 0.0);
    CHECK(g.value()[i] < 1.0);
  }

  auto gz = vstab(Var<double>::leaf(Tensor<double>({1, 4, 7, 7})));
  for (long i = 1; i < gz.value().numel(); ++i)
    CHECK(gz.value()[i] == doctest::Approx(gz.value()[0]).epsilon(1e-12));

  reg.zero_grad();
  backward(sum_all(vstab(x)));
  for (const char* w : {"vstab.center.w", "vstab.bifur.w", "vstab.width.w"}) {
    auto t = reg.find(w);
    REQUIRE(t.node()->grad.numel() > 0);
    double s = 0;
    for (long i = 0; i < t.node()->grad.numel(); ++i) s += std::abs(t.node()->grad[i]);
    CHECK(s > 0.0);
  }
}

TEST_CASE("vmaf residual identity at init and equal fusion weights") {
  ParamRegistry<double> reg;
  Rng rng(39);
  VMAFBlock<double> vmaf(reg, "vmaf", rng, 8);
  auto x = randx({2, 8, 6, 6}, 100);
  auto y = vmaf(x);
  CHECK(y.shape() == x.shape());
  CHECK(max_abs_diff(y.value(), x.value()) == 0.0);

  auto w = softmax_vec(reg.find("vmaf.fusion_w"));
  for (int i = 0; i < 3; ++i) CHECK(w.value()[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // shape contract at a larger width
  ParamRegistry<double> reg2;
  VMAFBlock<double> big(reg2, "v", rng, 64);
  CHECK(big(randx({2, 64, 16, 16}, 101)).shape() == Shape{2, 64, 16, 16});
}

TEST_CASE("vmaf gradcheck") {
  ParamRegistry<double> reg;
  Rng rng(43);
  VMAFBlock<double> vmaf(reg, "vmaf", rng, 4);
  // push the enhance conv off zero so its branch participates
  Rng r2(44);
  r2.fill_uniform(reg.find("vmaf.enhance.w").value(), -0.3, 0.3);
  auto x = randx({1, 4, 6, 6}, 102);
  std::vector<Var<double>> checks{x, reg.find("vmaf.fusion_w"), reg.find("vmaf.enhance.w"),
                                  reg.find("vmaf.vcab.out.w"), reg.find("vmaf.vstab.fuse.w"),
                                  reg.find("vmaf.vsab.fuse.w"), reg.find("vmaf.norm.gamma")};
  double err = gradcheck([&] { return project(vmaf(x)); }, checks, 1e-5, 60);
  CHECK(err < 1e-5);
}

TEST_CASE("pyramid enhance cumulative sums with identity kernels") {
  ParamRegistry<double> reg;
  Rng rng(45);
  PyramidEnhance<double> pyr(reg, "pyr", rng, 3);
  for (const char* nm : {"pyr.p1", "pyr.p2", "pyr.p3"}) {
    auto w = reg.find(std::string(nm) + ".w");
    w.value().set_zero();
    for (long c = 0; c < 3; ++c) w.value().at(c, c, 1, 1) = 1.0;
  }
  auto x = randx({1, 3, 5, 5}, 110);
  auto y = pyr(x, x, x);
  for (long i = 0; i < y.value().numel(); ++i)
    CHECK(y.value()[i] == doctest::Approx(3.0 * x.value()[i]).epsilon(1e-12));

  auto z = pyr(Var<double>::leaf(Tensor<double>({1, 3, 4, 4})),
               Var<double>::leaf(Tensor<double>({1, 3, 4, 4})),
               Var<double>::leaf(Tensor<double>({1, 3, 4, 4})));
  for (long i = 0; i < z.value().numel(); ++i) CHECK(std::isfinite(z.value()[i]));
}

TEST_CASE("hdfe residual identity at init and shape") {
  ParamRegistry<double> reg;
  Rng rng(47);
  HDFEBlock<double> hdfe(reg, "h", rng, 32);
  auto x = randx({2, 32, 12, 12}, 120);
  auto y = hdfe(x);
  CHECK(y.shape() == x.shape());
  CHECK(max_abs_diff(y.value(), x.value()) == 0.0);

  auto w = softmax_vec(reg.find("h.fusion_w"));
  CHECK(w.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w.value()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rate-6 dilated branch receptive field") {
  ParamRegistry<double> reg;
  Rng rng(49);
  Conv2dLayer<double> dil6(reg, "d6", rng, 1, 1, 3, 3, ConvSpec{1, 6, 6, 6, 6});
  Tensor<double> imp({1, 1, 25, 25});
  imp.at(0, 0, 12, 12) = 1.0;
  auto y = dil6(Var<double>::leaf(std::move(imp)));
  double at6 = std::abs(y.value().at(0, 0, 6, 6)) + std::abs(y.value().at(0, 0, 12, 18)) +
               std::abs(y.value().at(0, 0, 18, 12));
  CHECK(at6 > 0.0);
  for (long i = 0; i < 25; ++i)
    for (long j = 0; j < 25; ++j)
      if (std::max(std::abs(i - 12), std::abs(j - 12)) > 6)
        CHECK(y.value().at(0, 0, i, j) == 0.0);
}

TEST_CASE("hdfe gradcheck") {
  ParamRegistry<double> reg;
  Rng rng(51);
  HDFEBlock<double> hdfe(reg, "h", rng, 4);
  // zero-init projections hide the streams; open them for the check
  Rng r2(52);
  r2.fill_uniform(reg.find("h.interact.w").value(), -0.3, 0.3);
  r2.fill_uniform(reg.find("h.pyr.p1.w").value(), -0.3, 0.3);
  auto x = randx({1, 4, 8, 8}, 130);
  std::vector<Var<double>> checks{x,
                                  reg.find("h.fusion_w"),
                                  reg.find("h.interact.w"),
                                  reg.find("h.pyr.p1.w"),
                                  reg.find("h.stem_act.slope"),
                                  reg.find("h.ds_h.conv.w"),
                                  reg.find("h.dil4.w"),
                                  reg.find("h.eca.conv.w")};
  double err = gradcheck([&] { return project(hdfe(x)); }, checks, 1e-5, 60);
  CHECK(err < 1e-5);
}
