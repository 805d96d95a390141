#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "turing/core_tensors.hpp"

using namespace turing;

namespace {

Grid2D random_grid(Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Grid2D g(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) g(i, j) = n(rng);
  return g;
}

}  // namespace

TEST_CASE("convolve2d of zeros is zero") {
  const Grid2D k = random_grid(3, 3, 1);
  for (auto mode : {BoundaryMode::Periodic, BoundaryMode::ZeroPad}) {
    CHECK(convolve2d(Grid2D::Zero(6, 5), k, mode).isZero(0.0));
  }
}

TEST_CASE("centred impulse reads out the kernel point-reflected") {
  Grid2D g = Grid2D::Zero(3, 3);
  g(1, 1) = 1.0;
  Grid2D k(3, 3);
  k << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  // out(i,j) = sum K(m,l) g(i+m, j+l) picks K(-(i-1), -(j-1)).
  Grid2D expected(3, 3);
  expected << 9, 8, 7, 6, 5, 4, 3, 2, 1;
  CHECK(convolve2d(g, k, BoundaryMode::Periodic) == expected);
  CHECK(convolve2d(g, k, BoundaryMode::ZeroPad) == expected);
}

TEST_CASE("balanced kernel annihilates constants") {
  Grid2D k = random_grid(5, 5, 2);
  k.array() -= k.mean();
  const Grid2D out = convolve2d(Grid2D::Ones(9, 7), k, BoundaryMode::Periodic);
  CHECK(out.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("convolve2d matches the loop oracle in both modes") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Grid2D g = random_grid(7 + s % 5, 6 + s % 4, 100 + s);
    const Grid2D k = random_grid(2 * (s % 3) + 1, 2 * ((s + 1) % 3) + 1, 200 + s);
    for (bool periodic : {true, false}) {
      const Grid2D got = convolve2d(g, k, periodic ? BoundaryMode::Periodic : BoundaryMode::ZeroPad);
      CHECK((got - oracle::convolve(g, k, periodic)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("convolution is linear and shift-equivariant") {
  const Grid2D a = random_grid(12, 10, 3), b = random_grid(12, 10, 4), k = random_grid(5, 3, 5);
  const double alpha = 1.7, beta = -0.3;
  const Grid2D lhs = convolve2d(Grid2D(alpha * a + beta * b), k, BoundaryMode::Periodic);
  const Grid2D rhs = alpha * convolve2d(a, k, BoundaryMode::Periodic) + beta * convolve2d(b, k, BoundaryMode::Periodic);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * rhs.cwiseAbs().maxCoeff());

  const Grid2D shifted = convolve2d(cyclic_shift(a, 3, -2), k, BoundaryMode::Periodic);
  CHECK((shifted - cyclic_shift(convolve2d(a, k, BoundaryMode::Periodic), 3, -2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("convolve2d rejects even and oversized kernels") {
  CHECK_THROWS_AS(convolve2d(Grid2D::Zero(5, 5), Grid2D::Zero(2, 3), BoundaryMode::Periodic), ValidationError);
  CHECK_THROWS_AS(convolve2d(Grid2D::Zero(5, 5), Grid2D::Zero(7, 7), BoundaryMode::Periodic), ValidationError);
}

TEST_CASE("apply_perturbation clips and scales") {
  Image img(1, 1, 3);
  img(0, 0, 0) = 250;
  img(0, 0, 1) = 128;
  img(0, 0, 2) = 3;
  Tensor3 pat(1, 1, 3);
  pat(0, 0, 0) = 1;
  pat(0, 0, 1) = -1;
  pat(0, 0, 2) = -1;
  const Image out = apply_perturbation(img, pat, 10.0);
  CHECK(out(0, 0, 0) == 255.0);
  CHECK(out(0, 0, 1) == 118.0);
  CHECK(out(0, 0, 2) == 0.0);
  CHECK(apply_perturbation(img, Tensor3(1, 1, 3), 10.0) == img);
}

TEST_CASE("apply_perturbation stays in range and within budget of the ideal") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 255.0), e(-4.0, 4.0);
  Image img(3, 8, 8);
  Tensor3 eps(3, 8, 8);
  for (Index k = 0; k < img.size(); ++k) {
    img.flat()[k] = u(rng);
    eps.flat()[k] = e(rng);
  }
  const Image out = apply_perturbation(img, eps, 4.0, PatternScaling::Prescaled);
  CHECK(out.flat().minCoeff() >= 0.0);
  CHECK(out.flat().maxCoeff() <= 255.0);
  CHECK((out.flat() - img.flat()).cwiseAbs().maxCoeff() <= 4.0);
}

TEST_CASE("apply_perturbation rejects bad input") {
  CHECK_THROWS_AS(apply_perturbation(Image(3, 4, 4), Tensor3(3, 4, 5), 10.0), ValidationError);
  CHECK_THROWS_AS(apply_perturbation(Image(3, 4, 4), Tensor3(3, 4, 4), 0.0), ValidationError);
  CHECK_THROWS_AS(apply_perturbation(Image(1, 1, 1), Tensor3(1, 1, 1, 11.0), 10.0, PatternScaling::Prescaled),
                  ValidationError);
}

TEST_CASE("boundary mode names") {
  CHECK(parse_boundary_mode("periodic") == BoundaryMode::Periodic);
  CHECK(parse_boundary_mode(to_string(BoundaryMode::ZeroPad)) == BoundaryMode::ZeroPad);
  CHECK_THROWS_AS(parse_boundary_mode("reflect"), ValidationError);
}
