// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>

#include "octaseg/nn/mamba_blocks.hpp"
#include "support/gradcheck.hpp"

using namespace octaseg;
using testing::gradcheck;
using testing::project;
using testing::rand_tensor;

namespace {

Var<double> randx(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  return Var<double>::param(rand_tensor(s, seed, lo, hi));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Plain per-timestep loop over the recurrence, written independently of the
// production kernel. Frozen oracle.
Tensor<double> scan_loop_oracle(const Tensor<double>& x, const Tensor<double>& delta,
                                const Tensor<double>& Bs, const Tensor<double>& Cs,
                                const Tensor<double>& A_log, const Tensor<double>& D) {
  long B = x.dim(0), L = x.dim(1), C = x.dim(2), N = Bs.dim(2);
  Tensor<double> y({B, L, C});
  std::vector<double> h(static_cast<size_t>(N));
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c) {
      std::fill(h.begin(), h.end(), 0.0);
      for (long t = 0; t < L; ++t) {
        double dt = delta.at3(b, t, c);
        double xv = x.at3(b, t, c);
        double acc = 0;
        for (long n = 0; n < N; ++n) {
          double a = -std::exp(A_log.at2(c, n));
          h[n] = std::exp(dt * a) * h[n] + dt * Bs.at3(b, t, n) * xv;
          acc += Cs.at3(b, t, n) * h[n];
        }
        y.at3(b, t, c) = acc + D[c] * xv;
      }
    }
  return y;
}

struct ScanCase {
  Var<double> x, delta, Bs, Cs, A_log, D;
};

ScanCase random_case(Rng& rng, long B, long L, long C, long N) {
  ScanCase s;
  auto mk = [&](Shape sh, double lo, double hi) {
    Tensor<double> t(sh);
    rng.fill_uniform(t, lo, hi);
    return Var<double>::param(std::move(t));
  };
  s.x = mk({B, L, C}, -1, 1);
  s.delta = mk({B, L, C}, 0.01, 1.0);
  s.Bs = mk({B, L, N}, -1, 1);
  s.Cs = mk({B, L, N}, -1, 1);
  s.A_log = mk({C, N}, -2, 1);
  s.D = mk({C}, -1, 1);
  return s;
}

}  // namespace

TEST_CASE("scan matches the naive loop oracle on 100 random cases") {
  Rng rng(1234);
  auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < 100; ++k) {
    long B = 1 + static_cast<long>(rng.uniform(0, 2));
    long L = 1 + static_cast<long>(rng.uniform(0, 64));
    long C = 1 + static_cast<long>(rng.uniform(0, 8));
    long N = 1 + static_cast<long>(rng.uniform(0, 16));
    auto s = random_case(rng, B, std::min(L, 64L), std::min(C, 8L), std::min(N, 16L));
    auto y = scan_core(s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D);
    auto o = scan_loop_oracle(s.x.value(), s.delta.value(), s.Bs.value(), s.Cs.value(),
                              s.A_log.value(), s.D.value());
    for (long i = 0; i < o.numel(); ++i) {
      double err = std::abs(y.value()[i] - o[i]) /
                   std::max({1.0, std::abs(y.value()[i]), std::abs(o[i])});
      REQUIRE(err < 1e-6);
    }
  }
  double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(sec < 10.0);
}

TEST_CASE("scan hand-computed fixtures") {
  SUBCASE("vanishing step: delta -> 0 gives near-zero output without skip") {
    auto x = Var<double>::leaf(Tensor<double>({1, 3, 1}));
    x.value()[0] = 1;
    x.value()[1] = 2;
    x.value()[2] = 3;
    auto delta = Var<double>::leaf(Tensor<double>(Shape{1, 3, 1}, 1e-9));
    auto ones = Var<double>::leaf(Tensor<double>::ones(Shape{1, 3, 1}));
    auto alog = Var<double>::leaf(Tensor<double>({1, 1}));
    auto D = Var<double>::leaf(Tensor<double>({1}));
    auto y = scan_core(x, delta, ones, ones, alog, D);
    for (long i = 0; i < 3; ++i) CHECK(std::abs(y.value()[i]) < 1e-6);
  }
  SUBCASE("zero B with unit D reduces to the skip path exactly") {
    Rng rng(7);
    auto s = random_case(rng, 2, 9, 3, 4);
    auto zeroB = Var<double>::leaf(Tensor<double>({2, 9, 4}));
    auto oneD = Var<double>::leaf(Tensor<double>::ones(Shape{3}));
    auto y = scan_core(s.x, s.delta, zeroB, s.Cs, s.A_log, oneD);
    CHECK(max_abs_diff(y.value(), s.x.value()) == 0.0);
  }
  SUBCASE("half-decay recurrence: y = [1, 1.5, 1.75]") {
    auto x = Var<double>::leaf(Tensor<double>::ones(Shape{1, 3, 1}));
    auto delta = Var<double>::leaf(Tensor<double>::ones(Shape{1, 3, 1}));
    auto ones = Var<double>::leaf(Tensor<double>::ones(Shape{1, 3, 1}));
    auto alog = Var<double>::leaf(Tensor<double>(Shape{1, 1}, std::log(std::log(2.0))));
    auto D = Var<double>::leaf(Tensor<double>({1}));
    auto y = scan_core(x, delta, ones, ones, alog, D);
    CHECK(y.value()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.value()[1] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(y.value()[2] == doctest::Approx(1.75).epsilon(1e-12));
  }
  SUBCASE("strongly negative A stays finite and decays") {
    Rng rng(8);
    auto s = random_case(rng, 1, 16, 2, 3);
    auto alog = Var<double>::leaf(Tensor<double>(Shape{2, 3}, 3.0));
    auto y = scan_core(s.x, s.delta, s.Bs, s.Cs, alog, s.D);
    for (long i = 0; i < y.value().numel(); ++i) CHECK(std::isfinite(y.value()[i]));
  }
}

TEST_CASE("scan causality") {
  Rng rng(9);
  auto s = random_case(rng, 1, 12, 2, 3);
  auto y0 = scan_core(s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D);
  SUBCASE("perturbing a later token leaves earlier outputs unchanged") {
    s.x.value().at3(0, 3, 0) += 10.0;
    auto y1 = scan_core(s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D);
    for (long t = 0; t < 3; ++t)
      for (long c = 0; c < 2; ++c)
        CHECK(y1.value().at3(0, t, c) == y0.value().at3(0, t, c));
  }
  SUBCASE("zeroing a suffix leaves the prefix unchanged") {
    for (long t = 7; t < 12; ++t)
      for (long c = 0; c < 2; ++c) s.x.value().at3(0, t, c) = 0;
    auto y1 = scan_core(s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D);
    for (long t = 0; t < 7; ++t)
      for (long c = 0; c < 2; ++c)
        CHECK(y1.value().at3(0, t, c) == y0.value().at3(0, t, c));
  }
}

TEST_CASE("scan gradcheck, uneven and exact checkpoint chunking") {
  for (auto [B, L, C, N] : {std::array<long, 4>{2, 13, 3, 4}, std::array<long, 4>{1, 25, 2, 2}}) {
    Rng rng(100 + L);
    auto s = random_case(rng, B, L, C, N);
    std::vector<Var<double>> checks{s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D};
    double err = gradcheck(
        [&] { return project(scan_core(s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D)); }, checks,
        1e-6, 120);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("associative evaluation agrees with the sequential kernel") {
  Rng rng(11);
  for (long L : {37L, 64L, 1L}) {
    auto s = random_case(rng, 2, L, 5, 7);
    auto y = scan_core(s.x, s.delta, s.Bs, s.Cs, s.A_log, s.D);
    auto a = scan_core_values_associative(s.x.value(), s.delta.value(), s.Bs.value(),
                                          s.Cs.value(), s.A_log.value(), s.D.value());
    for (long i = 0; i < a.numel(); ++i) {
      double err = std::abs(y.value()[i] - a[i]) /
                   std::max({1.0, std::abs(y.value()[i]), std::abs(a[i])});
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("unfold traversal orders and fold inverse") {
  Tensor<double> ramp({1, 1, 2, 3});
  for (long i = 0; i < 6; ++i) ramp[i] = static_cast<double>(i);
  auto x = Var<double>::leaf(std::move(ramp));
  std::vector<std::vector<double>> expect = {
      {0, 1, 2, 3, 4, 5}, {5, 4, 3, 2, 1, 0}, {0, 3, 1, 4, 2, 5}, {5, 2, 4, 1, 3, 0}};
  for (int d = 0; d < 4; ++d) {
    auto s = unfold_scan(x, d);
    CHECK(s.shape() == Shape{1, 6, 1});
    for (long t = 0; t < 6; ++t) CHECK(s.value()[t] == expect[d][t]);
    auto back = fold_scan(s, d, 2, 3);
    CHECK(max_abs_diff(back.value(), x.value()) == 0.0);
  }
  auto big = randx({2, 3, 4, 5}, 55);
  for (int d = 0; d < 4; ++d)
    CHECK(max_abs_diff(fold_scan(unfold_scan(big, d), d, 4, 5).value(), big.value()) == 0.0);

  // fold/unfold carry gradients exactly (pure permutations; tolerance is
  // central-difference rounding noise only)
  double err = gradcheck(
      [&] { return project(fold_scan(unfold_scan(big, 2), 2, 4, 5)); }, {big}, 1e-6, 60);
  CHECK(err < 1e-8);
}

TEST_CASE("selective scan module: projection shapes and positive step sizes") {
  ParamRegistry<double> reg;
  Rng rng(13);
  SelectiveScan1D<double> s16(reg, "a", rng, 16, 8);
  SelectiveScan1D<double> s32(reg, "b", rng, 32, 8);
  CHECK(reg.find("a.x_proj").shape() == Shape{1 + 16, 16});
  CHECK(reg.find("b.x_proj").shape() == Shape{2 + 16, 32});
  CHECK(reg.find("a.dt_proj").shape() == Shape{16, 1});
  CHECK(reg.find("a.a_log").shape() == Shape{16, 8});
  for (long c = 0; c < 16; ++c) {
    double b = reg.find("a.dt_bias").value()[c];
    double dt = std::log1p(std::exp(b));
    CHECK(dt > 5e-4);
    CHECK(dt < 0.2);
  }
  // A strictly negative by construction
  for (long i = 0; i < reg.find("a.a_log").value().numel(); ++i)
    CHECK(-std::exp(reg.find("a.a_log").value()[i]) < 0.0);

  auto y = s16(randx({2, 10, 16}, 60));
  CHECK(y.shape() == Shape{2, 10, 16});
}

TEST_CASE("selective scan module gradcheck through projections") {
  ParamRegistry<double> reg;
  Rng rng(15);
  SelectiveScan1D<double> scan(reg, "s", rng, 16, 4);
  auto x = randx({1, 9, 16}, 61);
  std::vector<Var<double>> checks{x, reg.find("s.x_proj"), reg.find("s.dt_proj"),
                                  reg.find("s.dt_bias"), reg.find("s.a_log"),
                                  reg.find("s.d")};
  double err = gradcheck([&] { return project(scan(x)); }, checks, 1e-6, 80);
  CHECK(err < 1e-5);
}

namespace {

// Rebuild one scan direction from registry entries (mirrors the module wiring).
Var<double> scan_dir_from_registry(const ParamRegistry<double>& reg, const std::string& p,
                                   const Var<double>& seq, long C, long N) {
  long R = std::max<long>(1, C / 16);
  auto xp = seq_linear(seq, reg.find(p + ".x_proj"));
  auto dt = softplus(seq_linear(slice_seq(xp, 0, R), reg.find(p + ".dt_proj"),
                                reg.find(p + ".dt_bias")));
  return scan_core(seq, dt, slice_seq(xp, R, R + N), slice_seq(xp, R + N, R + 2 * N),
                   reg.find(p + ".a_log"), reg.find(p + ".d"));
}

void tie_scan_params(ParamRegistry<double>& reg, const std::string& base) {
  for (int d = 1; d < 4; ++d)
    for (const char* sfx : {".a_log", ".d", ".x_proj", ".dt_proj", ".dt_bias"}) {
      auto dst = reg.find(base + ".scan" + std::to_string(d) + sfx);
      auto src = reg.find(base + ".scan0" + sfx);
      dst.value() = src.value();
    }
}

}  // namespace

TEST_CASE("cross-scan: shape, single-pixel degenerate grid, rotation symmetry") {
  ParamRegistry<double> reg;
  Rng rng(17);
  long C = 16, N = 4;
  CrossScan2D<double> cross(reg, "cs", rng, C, N);
  CHECK(cross(randx({2, C, 8, 8}, 70)).shape() == Shape{2, C, 8, 8});

  SUBCASE("H=W=1 with tied directions equals 4x the single-token scan, normalized") {
    tie_scan_params(reg, "cs");
    auto x = randx({2, C, 1, 1}, 71);
    auto d = silu(conv2d(x, reg.find("cs.dw.w"), reg.find("cs.dw.b"), 1, 1, 1, 1, 1, C));
    auto one = scale(fold_scan(scan_dir_from_registry(reg, "cs.scan0", unfold_scan(d, 0), C, N),
                               0, 1, 1),
                     4.0);
    auto expected = layer_norm_c(one, reg.find("cs.norm.gamma"), reg.find("cs.norm.beta"));
    CHECK(max_abs_diff(cross(x).value(), expected.value()) < 1e-12);
  }

  SUBCASE("tied directions and symmetric kernel commute with 180-degree rotation") {
    tie_scan_params(reg, "cs");
    auto w = reg.find("cs.dw.w");
    for (long c = 0; c < C; ++c)
      for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 3; ++j) {
          if (i * 3 + j >= (2 - i) * 3 + (2 - j)) continue;
          double m = 0.5 * (w.value().at(c, 0, i, j) + w.value().at(c, 0, 2 - i, 2 - j));
          w.value().at(c, 0, i, j) = m;
          w.value().at(c, 0, 2 - i, 2 - j) = m;
        }
    auto x = randx({1, C, 5, 7}, 72);
    auto lhs = cross(rot180(x));
    auto rhs = rot180(cross(x));
    CHECK(max_abs_diff(lhs.value(), rhs.value()) < 1e-10);
  }
}

TEST_CASE("vss2d: residual identity at init, multiplicative gate, parameter monotonicity") {
  ParamRegistry<double> reg;
  Rng rng(19);
  long C = 8, N = 4;
  VSS2D<double> vss(reg, "v", rng, C, N, /*use_vmaf_gate=*/false);
  auto x = randx({2, C, 6, 6}, 80);
  CHECK(max_abs_diff(vss(x).value(), x.value()) == 0.0);

  SUBCASE("forcing the gate doubles the update when silu(gate) doubles") {
    Rng r2(81);
    r2.fill_uniform(reg.find("v.proj_out.w").value(), -0.5, 0.5);
    auto gw = reg.find("v.proj_gate.w");
    gw.value().set_zero();
    auto solve_silu = [](double target) {
      double lo = 0, hi = 6;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (mid / (1 + std::exp(-mid)) < target ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    };
    auto gb = reg.find("v.proj_gate.b");
    for (long i = 0; i < C; ++i) gb.value()[i] = solve_silu(1.0);
    Tensor<double> u1 = vss(x).value();
    for (long i = 0; i < C; ++i) gb.value()[i] = solve_silu(2.0);
    Tensor<double> u2 = vss(x).value();
    for (long i = 0; i < u1.numel(); ++i)
      CHECK(u2[i] - x.value()[i] ==
            doctest::Approx(2.0 * (u1[i] - x.value()[i])).epsilon(1e-7));
  }

  SUBCASE("attention-gated variant has strictly more parameters") {
    ParamRegistry<double> ra, rb;
    Rng r3(82), r4(82);
    VSS2D<double> plain(ra, "v", r3, C, N, false);
    VSS2D<double> gated(rb, "v", r4, C, N, true);
    CHECK(gated(randx({1, C, 6, 6}, 83)).shape() == Shape{1, C, 6, 6});
    CHECK(rb.count_scalars() > ra.count_scalars());
  }
}

TEST_CASE("lsa: 1.5x at init, live gate gradient") {
  ParamRegistry<double> reg;
  Rng rng(21);
  LSABlock<double> lsa(reg, "l", rng, 4);
  auto x = randx({2, 4, 5, 5}, 90);
  auto y = lsa(x);
  for (long i = 0; i < y.value().numel(); ++i)
    CHECK(y.value()[i] == doctest::Approx(1.5 * x.value()[i]).epsilon(1e-15));

  reg.zero_grad();
  backward(sum_all(lsa(x)));
  auto gw = reg.find("l.gate.w").node()->grad;
  REQUIRE(gw.numel() > 0);
  double s = 0;
  for (long i = 0; i < gw.numel(); ++i) s += std::abs(gw[i]);
  CHECK(s > 0.0);
}

TEST_CASE("cfeb: circle geometry, residual scale, zeroed-conv identity") {
  SUBCASE("disk pixel counts near pi r^2 and exact inequality") {
    for (long H : {64L, 112L, 224L}) {
      long r = H / 4;
      auto m = make_circle_mask<double>(H, H);
      long cnt = 0;
      for (long i = 0; i < H; ++i)
        for (long j = 0; j < H; ++j) {
          bool in = (i - H / 2) * (i - H / 2) + (j - H / 2) * (j - H / 2) <= r * r;
          CHECK(m.at(0, 0, i, j) == (in ? 1.0 : 0.0));
          cnt += in;
        }
      double ideal = M_PI * static_cast<double>(r) * static_cast<double>(r);
      CHECK(std::abs(cnt - ideal) / ideal < 0.04);
    }
  }
  SUBCASE("rectangular input uses the smaller dimension") {
    auto m = make_circle_mask<double>(20, 64);
    // radius 5 centered at (10, 32)
    CHECK(m.at(0, 0, 10, 32) == 1.0);
    CHECK(m.at(0, 0, 10, 37) == 1.0);
    CHECK(m.at(0, 0, 10, 38) == 0.0);
    CHECK(m.at(0, 0, 4, 32) == 0.0);
  }
  SUBCASE("update is exactly 0.3 of the enhancement features") {
    ParamRegistry<double> reg;
    Rng rng(23);
    CFEBBlock<double> cfeb(reg, "c", rng, 8);
    auto x = randx({1, 8, 16, 16}, 91);
    auto y = cfeb(x);
    auto f = cfeb.features(x);
    for (long i = 0; i < y.value().numel(); ++i)
      CHECK(y.value()[i] - x.value()[i] ==
            doctest::Approx(0.3 * f.value()[i]).epsilon(1e-12));
    // center emphasis doubles the masked feature relative to the unmasked one
    ParamRegistry<double> reg2;
    Rng rng2(23);
    CFEBBlock<double> nomask(reg2, "c", rng2, 8, /*mask_enabled=*/false);
    auto fn = nomask.features(x);
    auto disk = make_circle_mask<double>(16, 16);
    for (long c = 0; c < 8; ++c)
      for (long i = 0; i < 16; ++i)
        for (long j = 0; j < 16; ++j) {
          double scale = disk.at(0, 0, i, j) == 1.0 ? 2.0 : 1.0;
          CHECK(f.value().at(0, c, i, j) ==
                doctest::Approx(scale * fn.value().at(0, c, i, j)).epsilon(1e-12));
        }
  }
  SUBCASE("zeroed conv weights give the identity") {
    ParamRegistry<double> reg;
    Rng rng(25);
    CFEBBlock<double> cfeb(reg, "c", rng, 4);
    reg.find("c.conv.w").value().set_zero();
    auto x = randx({1, 4, 12, 12}, 92);
    CHECK(max_abs_diff(cfeb(x).value(), x.value()) == 0.0);
  }
}

TEST_CASE("composite residual blocks: identity at init, shapes, parameter arithmetic") {
  long C = 8, N = 4;
  ParamRegistry<double> r_rv, r_faz, r_vmaf, r_cfeb, r_faz0;
  Rng g1(31), g2(31), g3(31), g4(31), g5(31);
  RVMambaBlock<double> rv(r_rv, "b", g1, C, N, true, true, DsconvMode::Plain);
  FAZMambaBlock<double> faz(r_faz, "b", g2, C, N, true, true, DsconvMode::Plain);
  VMAFBlock<double> vmaf_alone(r_vmaf, "b.vss.vmaf", g3, C);
  CFEBBlock<double> cfeb_alone(r_cfeb, "b.cfeb", g4, C);
  FAZMambaBlock<double> faz_nocfeb(r_faz0, "b", g5, C, N, true, false, DsconvMode::Plain);

  auto x = randx({2, C, 9, 9}, 95);
  CHECK(max_abs_diff(rv(x).value(), x.value()) == 0.0);
  CHECK(max_abs_diff(faz(x).value(), x.value()) == 0.0);
  CHECK(rv(x).shape() == x.shape());
  CHECK(faz(x).shape() == x.shape());

  // FAZ variant = RV variant - attention gate + center enhancement
  CHECK(r_faz.count_scalars() ==
        r_rv.count_scalars() - r_vmaf.count_scalars() + r_cfeb.count_scalars());
  CHECK(r_faz0.count_scalars() == r_rv.count_scalars() - r_vmaf.count_scalars());
  CHECK(r_faz0.count_scalars() < r_rv.count_scalars());

  // At exact init the zero-γ norm and zero output projection block the
  // residual branch's gradient; once they move off zero, training signal
  // reaches the scan parameters.
  r_rv.zero_grad();
  Rng gopen(97);
  gopen.fill_uniform(r_rv.find("b.norm.gamma").value(), 0.2, 0.8);
  gopen.fill_uniform(r_rv.find("b.vss.proj_out.w").value(), -0.4, 0.4);
  backward(sum_all(rv(x)));
  auto g = r_rv.find("b.vss.cross.scan0.a_log").node()->grad;
  REQUIRE(g.numel() > 0);
  double s = 0;
  for (long i = 0; i < g.numel(); ++i) s += std::abs(g[i]);
  CHECK(s > 0.0);
}
