#include <doctest.h>

#include <random>

#include "golden.hpp"
#include "oracles.hpp"
#include "turing/fourier.hpp"
#include "turing/tensor_io.hpp"
#include "turing/turing_ca.hpp"

using namespace turing;
using namespace turing::ca;

namespace {

Grid2D random_free_kernel(int size, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FreeKernel k{size, Eigen::VectorXd(size * size)};
  for (Index i = 0; i < k.elements.size(); ++i) k.elements[i] = n(rng);
  return realize_kernel(k);
}

Tensor3 binary_of(const Tensor3& s) {
  Tensor3 b = s;
  b.flat() = (s.flat().array() + 1.0) / 2.0;
  return b;
}

}  // namespace

TEST_CASE("ring kernel uses exact lattice counts") {
  // r_in = 1.2: inner d^2 in {0, 1}, outer d^2 in {2, 4, 5}.
  const Grid2D k = realize_kernel(RingKernel{1.2, 2.5});
  REQUIRE(k.rows() == 5);
  CHECK((k.array() == 3.2).count() == 5);
  CHECK((k.array() == -1.0).count() == 16);
  CHECK(k(2, 2) == 3.2);
  CHECK(k(1, 2) == 3.2);
  CHECK(k(1, 1) == -1.0);
  CHECK(k(0, 2) == -1.0);
  CHECK(k(0, 0) == 0.0);
  CHECK(std::abs(k.sum()) < 1e-12);

  // r_in = 1.5 also takes the diagonal neighbours (d^2 = 2 < 2.25).
  const Grid2D wide = realize_kernel(RingKernel{1.5, 2.5});
  CHECK((wide.array() > 0).count() == 9);
  CHECK((wide.array() == -1.0).count() == 12);
  CHECK(wide(1, 1) == doctest::Approx(12.0 / 9.0).epsilon(1e-15));
  CHECK(std::abs(wide.sum()) < 1e-12);
}

TEST_CASE("rect kernel balance") {
  const Grid2D k = realize_kernel(RectKernel{13, 3, 3});
  CHECK(k(6, 6) == doctest::Approx(160.0 / 9.0).epsilon(1e-15));
  CHECK((k.array() > 0).count() == 9);
  CHECK(k(0, 0) == -1.0);
  CHECK(std::abs(k.sum()) < 1e-12);
  // Non-square block stays centred.
  const Grid2D r = realize_kernel(RectKernel{5, 1, 3});
  CHECK((r.row(2).segment(1, 3).array() > 0).all());
  CHECK((r.array() > 0).count() == 3);
}

TEST_CASE("constant free kernel realizes to zero") {
  const Grid2D k = realize_kernel(FreeKernel{3, Eigen::VectorXd::Constant(9, 5.0)});
  CHECK(k.isZero(0.0));
}

TEST_CASE("kernel validation names the invariant") {
  CHECK_THROWS_WITH_AS(realize_kernel(RingKernel{3.0, 2.0}), doctest::Contains("r_in < r_out"), ValidationError);
  CHECK_THROWS_AS(realize_kernel(RingKernel{0.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(realize_kernel(RingKernel{1.0, 1.2}), ValidationError);  // empty annulus
  CHECK_THROWS_AS(realize_kernel(RectKernel{12, 3, 3}), ValidationError);
  CHECK_THROWS_AS(realize_kernel(RectKernel{5, 5, 5}), ValidationError);
  CHECK_THROWS_AS(realize_kernel(RectKernel{5, 0, 3}), ValidationError);
  CHECK_THROWS_AS(realize_kernel(FreeKernel{3, Eigen::VectorXd::Zero(8)}), ValidationError);
  CHECK_THROWS_AS(ca_step(PatternState{Tensor3(1, 8, 8, 1.0)}, Grid2D::Ones(3, 3)), ValidationError);
  CHECK_THROWS_AS(ca_step(PatternState{Tensor3(1, 8, 8, 0.0)}, realize_kernel(RectKernel{3, 1, 1})),
                  ValidationError);
}

TEST_CASE("constant states resolve to +1") {
  const Grid2D k = realize_kernel(RingKernel{1.5, 2.5});
  for (double v : {1.0, -1.0}) {
    const PatternState out = ca_step(PatternState{Tensor3(2, 9, 9, v)}, k);
    CHECK(out.cells == Tensor3(2, 9, 9, 1.0));
    CHECK(out.step_count == 1);
  }
  CHECK(ca_step_binary(PatternState{Tensor3(1, 6, 6, 1.0)}, k).cells == Tensor3(1, 6, 6, 1.0));
}

TEST_CASE("ca_step matches the brute-force oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Index h = 8 + trial % 9, w = 9 + (trial * 7) % 8;
    const PatternState s = random_state(2, h, w, rng);
    Grid2D k;
    switch (trial % 3) {
      case 0: k = realize_kernel(RingKernel{1.5, 2.5 + 0.5 * (trial % 2)}); break;
      case 1: k = realize_kernel(RectKernel{5, 1 + trial % 3, 2}); break;
      default: k = random_free_kernel(3 + 2 * (trial % 3), rng);
    }
    for (bool periodic : {true, false}) {
      const auto mode = periodic ? BoundaryMode::Periodic : BoundaryMode::ZeroPad;
      CHECK(ca_step(s, k, mode).cells == oracle::ca_step(s.cells, k, periodic));
    }
  }
}

TEST_CASE("binary and signed steps agree") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const PatternState s = random_state(1, 8 + trial % 5, 8, rng);
    const Grid2D k = trial % 2 ? realize_kernel(RingKernel{1.5, 2.5}) : random_free_kernel(3, rng);
    const Tensor3 b_next = ca_step_binary(PatternState{binary_of(s.cells)}, k).cells;
    Tensor3 lifted = b_next;
    lifted.flat() = 2.0 * b_next.flat().array() - 1.0;
    CHECK(ca_step(s, k).cells == lifted);
  }
}

TEST_CASE("ca_step is translation equivariant and fixed points are stable") {
  Rng rng(13);
  const Grid2D k = realize_kernel(RingKernel{2.0, 3.5});
  const PatternState s = random_state(1, 24, 20, rng);
  PatternState shifted{Tensor3(1, 24, 20)};
  shifted.cells.channel(0) = cyclic_shift(s.cells.channel(0), 5, 3);
  const Tensor3 a = ca_step(shifted, k).cells;
  const Tensor3 b = ca_step(s, k).cells;
  CHECK(Grid2D(a.channel(0)) == cyclic_shift(b.channel(0), 5, 3));

  const CaResult r = run_ca(s, RingKernel{2.0, 3.5}, Independent{}, 64);
  if (r.fixed_point) CHECK(ca_step(r.state, k).cells == r.state.cells);
  CHECK(is_sign_pattern(r.state.cells));
}

TEST_CASE("expand_init replicates tiles") {
  InitMap one{1, 4, Tensor3(1, 1, 1, 1.0)};
  CHECK(expand_init(one).cells == Tensor3(1, 4, 4, 1.0));

  InitMap checker{2, 2, Tensor3(1, 2, 2)};
  checker.tile_values(0, 0, 0) = 1;
  checker.tile_values(0, 0, 1) = -1;
  checker.tile_values(0, 1, 0) = -1;
  checker.tile_values(0, 1, 1) = 1;
  const Tensor3 e = expand_init(checker).cells;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) CHECK(e(0, i, j) == (((i / 2) + (j / 2)) % 2 == 0 ? 1.0 : -1.0));

  Rng rng(3);
  const InitMap big = random_init_map(3, 7, 32, rng);
  const PatternState full = expand_init(big);
  CHECK(full.cells.height() == 224);
  CHECK(full.cells.width() == 224);
  CHECK(expand_init_to(big, 224, 224).cells == full.cells);
  const Tensor3 small = expand_init_to(big, 32, 32).cells;
  CHECK(small(2, 31, 0) == big.tile_values(2, 6, 0));
  CHECK(small(1, 4, 5) == big.tile_values(1, 4 * 7 / 32, 5 * 7 / 32));
}

TEST_CASE("run_ca with zero steps is the identity") {
  Rng rng(4);
  const PatternState s = random_state(3, 16, 16, rng);
  const CaResult r = run_ca(s, RingKernel{1.5, 2.5}, Summation{}, 0);
  CHECK(r.state.cells == s.cells);
  CHECK_FALSE(r.cap_hit);
}

TEST_CASE("summation mixing feeds channel 3 with the sum of the others") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const PatternState s = random_state(3, 12, 12, rng);
    const Grid2D k = trial % 2 ? realize_kernel(RingKernel{1.5, 2.5}) : random_free_kernel(5, rng);
    const Tensor3 got = ca_step_mixed(s, k, Summation{}).cells;
    const Grid2D c0 = oracle::convolve(Grid2D(s.cells.channel(0)), k, true);
    const Grid2D c1 = oracle::convolve(Grid2D(s.cells.channel(1)), k, true);
    const double tol = 1e-9 * oracle::l1(k);
    for (Index i = 0; i < 12; ++i) {
      for (Index j = 0; j < 12; ++j) {
        CHECK(got(0, i, j) == (c0(i, j) >= -tol ? 1.0 : -1.0));
        CHECK(got(1, i, j) == (c1(i, j) >= -tol ? 1.0 : -1.0));
        CHECK(got(2, i, j) == (c0(i, j) + c1(i, j) >= -2 * tol ? 1.0 : -1.0));
      }
    }
  }
}

TEST_CASE("degenerate 3D and pointwise mixes reduce to independent channels") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const PatternState s = random_state(3, 14, 13, rng);
    const Grid2D k = random_free_kernel(5, rng);
    const Tensor3 independent = ca_step_mixed(s, k, Independent{}).cells;
    CHECK(independent == ca_step(s, k).cells);

    Filter3D f;
    f.slices = {Grid2D::Zero(5, 5), k, Grid2D::Zero(5, 5)};
    CHECK(ca_step_mixed(s, k, f).cells == independent);

    Pointwise p;
    p.kernels = {k, k, k};
    CHECK(ca_step_mixed(s, k, p).cells == independent);
  }
}

TEST_CASE("3D filter slides over the channel axis") {
  Rng rng(7);
  const PatternState s = random_state(3, 10, 10, rng);
  const Grid2D k = random_free_kernel(3, rng);
  // Only the d = 2 slice: channel c reads channel c + 1.
  Filter3D f;
  f.slices = {Grid2D::Zero(3, 3), Grid2D::Zero(3, 3), k};
  const Tensor3 got = ca_step_mixed(s, k, f).cells;
  for (Index c = 0; c < 3; ++c) {
    Tensor3 src(1, 10, 10);
    src.channel(0) = s.cells.channel((c + 1) % 3);
    CHECK(Grid2D(got.channel(c)) == Grid2D(oracle::ca_step(src, k, true).channel(0)));
  }
}

TEST_CASE("pointwise mixing with a permutation routes channels") {
  Rng rng(8);
  const PatternState s = random_state(3, 10, 10, rng);
  Pointwise p;
  p.kernels = {random_free_kernel(3, rng), random_free_kernel(3, rng), random_free_kernel(3, rng)};
  p.mix << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  const Tensor3 got = ca_step_mixed(s, p.kernels[0], p).cells;
  for (Index c = 0; c < 3; ++c) {
    const Index src = (c + 1) % 3;
    Tensor3 in(1, 10, 10);
    in.channel(0) = s.cells.channel(src);
    CHECK(Grid2D(got.channel(c)) == Grid2D(oracle::ca_step(in, p.kernels[src], true).channel(0)));
  }
}

TEST_CASE("mix names") {
  for (auto kind : {MixKind::Independent, MixKind::Summation, MixKind::Filter3D, MixKind::Pointwise}) {
    CHECK(parse_mix_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_mix_kind("average"), ValidationError);
  CHECK_THROWS_AS(ca_step_mixed(PatternState{Tensor3(1, 8, 8, 1.0)}, realize_kernel(RectKernel{3, 1, 1}), Summation{}),
                  ValidationError);
}

TEST_CASE("seeded ring run settles at the ring scale") {
  Rng rng(derive_seed(7, "init"));
  const PatternState s = random_state(1, 64, 64, rng);
  const CaResult r = run_ca(s, RingKernel{2.0, 3.5}, Independent{}, 20);
  CHECK(r.fixed_point);
  const double wl = fourier::dominant_wavelength(r.state.cells);
  CHECK(wl >= 4.0);
  CHECK(wl <= 7.0);
  const auto bytes = encode_tpat(r.state.cells);
  CHECK(golden::matches("ring_2_3.5_seed7.tpat", std::string(bytes.begin(), bytes.end())));
}
