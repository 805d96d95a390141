#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <random>

#include "turing/boyd_uap.hpp"
#include "turing/fourier.hpp"
#include "turing/rng.hpp"

using namespace turing;
using namespace turing::boyd;

namespace {

Eigen::MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Eigen::VectorXd random_vector(Index n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

nn::ConvNet single_layer(double weight, double bias) {
  nn::ConvLayer layer;
  layer.in_channels = 1;
  layer.out_channels = 2;
  layer.weight = Eigen::MatrixXd::Constant(2, 9, weight);
  layer.weight(1, 4) = 2.0 * weight;
  layer.bias = Eigen::VectorXd::Constant(2, bias);
  return nn::ConvNet({1, 6, 6}, {layer});
}

double min_abs_preactivation(const nn::ConvNet& net, const Eigen::VectorXd& x, int layer) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& pre : net.preactivations(x, layer)) m = std::min(m, pre.cwiseAbs().minCoeff());
  return m;
}

}  // namespace

TEST_CASE("psi signed powers") {
  CHECK(psi(-3.0, 2.0) == -3.0);
  CHECK(psi(-5.0, 1.0) == -1.0);
  CHECK(psi(2.0, 3.0) == 4.0);
  CHECK(psi(0.0, 1.0) == 0.0);
  Eigen::ArrayXd z(3);
  z << -2.0, 0.5, 7.0;
  CHECK((psi(z, 2.0) == z).all());
}

TEST_CASE("boyd on diag(3, 1) is the power method") {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 2);
  j(0, 0) = 3.0;
  j(1, 1) = 1.0;
  const BoydResult r = boyd_iterate(DenseOperator(j), {2.0, 2.0, 200, 1e-14}, Eigen::Vector2d(1, 1) / std::sqrt(2.0));
  CHECK(r.converged);
  CHECK(std::abs(std::abs(r.eps[0]) - 1.0) < 1e-12);
  CHECK(std::abs(r.eps[1]) < 1e-12);
  // After one step the iterate is (9, 1) / norm.
  const BoydResult one = boyd_iterate(DenseOperator(j), {2.0, 2.0, 1, 0.0}, Eigen::Vector2d(1, 1) / std::sqrt(2.0));
  CHECK(one.eps[0] == doctest::Approx(9.0 / std::sqrt(82.0)));
  CHECK(one.eps[1] == doctest::Approx(1.0 / std::sqrt(82.0)));
}

TEST_CASE("p = q = 2 fixed point is the leading right singular vector") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index rows = 10 + 5 * seed, cols = 8 + 5 * seed;
    const Eigen::MatrixXd j = random_matrix(rows, cols, seed);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinV);
    const Eigen::VectorXd v = svd.matrixV().col(0);
    const BoydResult r = boyd_iterate(DenseOperator(j), {2.0, 2.0, 100000, 1e-14}, random_vector(cols, 100 + seed));
    const double err = std::min((r.eps - v).cwiseAbs().maxCoeff(), (r.eps + v).cwiseAbs().maxCoeff());
    CHECK(err < 1e-6);
    const BoydResult g =
        boyd_iterate_gram(j.transpose() * j, {2.0, 2.0, 100000, 1e-14}, random_vector(cols, 100 + seed));
    CHECK(std::min((g.eps - v).cwiseAbs().maxCoeff(), (g.eps + v).cwiseAbs().maxCoeff()) < 1e-6);
  }
}

TEST_CASE("p = infinity iterates are sign vectors") {
  const Eigen::MatrixXd j = random_matrix(20, 15, 7);
  for (int iters : {1, 2, 5, 50}) {
    const BoydResult r = boyd_iterate(DenseOperator(j), {kInfinity, 2.0, iters, 0.0}, random_vector(15, 8));
    CHECK((r.eps.array().abs() == 1.0).all());
  }
  const BoydResult q1 = boyd_iterate(DenseOperator(j), {kInfinity, 1.0, 20, 0.0}, random_vector(15, 9));
  CHECK((q1.eps.array().abs() == 1.0).all());
}

TEST_CASE("boyd config and degenerate input") {
  CHECK_THROWS_AS(boyd_iterate(DenseOperator(Eigen::MatrixXd::Identity(3, 3)), {3.0, 2.0}, Eigen::VectorXd::Ones(3)),
                  ValidationError);
  CHECK_THROWS_AS(boyd_iterate(DenseOperator(Eigen::MatrixXd::Identity(3, 3)), {}, Eigen::VectorXd::Zero(3)),
                  ValidationError);
  CHECK_THROWS_AS(boyd_iterate(DenseOperator(Eigen::MatrixXd::Zero(3, 3)), {}, Eigen::VectorXd::Ones(3)),
                  NumericalError);
  CHECK_THROWS_AS(boyd_iterate_gram(Eigen::MatrixXd::Identity(3, 3), {2.0, 1.0}, Eigen::VectorXd::Ones(3)),
                  ValidationError);
}

TEST_CASE("jacobian of a single layer with saturated masks") {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(36, 1.0);
  const nn::ConvNet on = single_layer(0.5, 10.0);
  const Eigen::MatrixXd m = Eigen::MatrixXd(on.conv_matrix(1));
  CHECK(jacobian(on, x, 1).matrix == m);
  const nn::ConvNet off = single_layer(0.5, -100.0);
  CHECK(jacobian(off, x, 1).matrix.isZero(0.0));
}

TEST_CASE("jacobian matches central finite differences") {
  const nn::ConvNet net = gram_diagnostic_net(3);
  int tested = 0;
  for (std::uint64_t seed = 0; tested < 10 && seed < 200; ++seed) {
    const Eigen::VectorXd x = random_inputs(net.input_shape(), 1, seed).front();
    if (min_abs_preactivation(net, x, 2) < 1e-3) continue;
    ++tested;
    const Eigen::MatrixXd j = jacobian(net, x, 2).matrix;
    const double h = 1e-4;
    Eigen::MatrixXd fd(j.rows(), j.cols());
    for (Index k = 0; k < x.size(); ++k) {
      Eigen::VectorXd xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      fd.col(k) = (net.features(xp, 2) - net.features(xm, 2)) / (2 * h);
    }
    CHECK((fd - j).cwiseAbs().maxCoeff() / j.cwiseAbs().maxCoeff() < 1e-5);
  }
  CHECK(tested == 10);
}

TEST_CASE("matrix-free batch Jacobian agrees with the dense one") {
  const nn::ConvNet net = gram_diagnostic_net(4);
  const auto batch = random_inputs(net.input_shape(), 3, 5);
  const BatchJacobianOperator op(net, batch, 2);
  Eigen::MatrixXd stacked(op.rows(), op.cols());
  Index row = 0;
  for (const auto& x : batch) {
    const Eigen::MatrixXd j = jacobian(net, x, 2).matrix;
    stacked.middleRows(row, j.rows()) = j;
    row += j.rows();
  }
  const Eigen::VectorXd v = random_vector(op.cols(), 6), y = random_vector(op.rows(), 7);
  CHECK((op.apply(v) - stacked * v).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((op.apply_transpose(y) - stacked.transpose() * y).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(y.dot(op.apply(v)) - op.apply_transpose(y).dot(v)) < 1e-9);
  const Eigen::MatrixXd g = batch_gram(net, batch, 2);
  CHECK((g - stacked.transpose() * stacked).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("batch gram is symmetric PSD and reduces to JtJ for one image") {
  const nn::ConvNet net = gram_diagnostic_net(8);
  const auto one = random_inputs(net.input_shape(), 1, 9);
  const Eigen::MatrixXd j = jacobian(net, one.front(), 1).matrix;
  CHECK((batch_gram(net, one, 1) - j.transpose() * j).cwiseAbs().maxCoeff() < 1e-10);

  const Eigen::MatrixXd g = batch_gram(net, random_inputs(net.input_shape(), 8, 10), 2);
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * g.norm());
}

TEST_CASE("conv_matrix and adjoint agree with apply_linear") {
  const nn::ConvNet net = gram_diagnostic_net(11);
  for (int layer = 1; layer <= 2; ++layer) {
    const Eigen::MatrixXd m(net.conv_matrix(layer));
    const Eigen::VectorXd v = random_vector(m.cols(), 12), y = random_vector(m.rows(), 13);
    CHECK((net.apply_linear(layer, v) - m * v).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((net.apply_linear_transpose(layer, y) - m.transpose() * y).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("convolutionality score") {
  Grid2D k(3, 3);
  k << 0.5, -1, 0.25, 2, 1, -0.5, 0.1, 0.3, -2;
  const Eigen::MatrixXd conv = periodic_convolution_matrix(k, 16, 16);
  CHECK(convolutionality_score(conv, {1, 16, 16}) >= 1.0 - 1e-9);
  const double noise = convolutionality_score(random_matrix(256, 256, 14), {1, 16, 16});
  CHECK(noise >= 0.0);
  CHECK(noise < 0.2);

  const nn::ConvNet net = gram_diagnostic_net(kBundledNetSeed);
  const auto score = [&](Index b) {
    return convolutionality_score(batch_gram(net, random_inputs(net.input_shape(), b, 15), 2), net.input_shape());
  };
  CHECK(score(256) >= score(4));
}

TEST_CASE("expected DBD closed form") {
  const Eigen::MatrixXd b = symmetric_circulant({2.0, 1.0}, 8);
  CHECK(b(0, 0) == 2.0);
  CHECK(b(0, 1) == 1.0);
  CHECK(b(0, 7) == 1.0);
  CHECK(b(0, 2) == 0.0);
  CHECK(b == b.transpose());
  const Eigen::MatrixXd e = expected_dbd(b, {0.5, {}});
  CHECK(e(3, 3) == 1.0);
  CHECK(e(3, 4) == 0.25);
  CHECK(expected_dbd(b, {1.0, {}}) == b);
  CHECK(expected_dbd(b, {0.0, {}}).isZero(0.0));
}

TEST_CASE("theorem 1 Monte Carlo check") {
  const Eigen::MatrixXd b = symmetric_circulant({2.0, 1.0}, 16);
  for (double c : {0.25, 0.5, 0.9}) {
    const Theorem1Report r = theorem1_mc_check(b, {c, {}}, 100000, derive_seed(2020, "theorem1-test"));
    CHECK(r.within_bound);
    CHECK(r.entries_tested == 32);
    CHECK(r.max_abs_deviation <= r.bound);
  }
  const Theorem1Report one = theorem1_mc_check(b, {1.0, {}}, 10000, 1);
  CHECK(one.estimate == b);
  CHECK(one.within_bound);
  CHECK(theorem1_mc_check(b, {0.0, {}}, 10000, 1).estimate.isZero(0.0));
}

TEST_CASE("depth feature size is deterministic and consistent") {
  const nn::ConvNet net = depth_diagnostic_net(kBundledNetSeed);
  const auto batch = random_inputs(net.input_shape(), 4, 16);
  const auto a = depth_feature_size(net, batch, {1}, 17, 30);
  const auto b = depth_feature_size(net, batch, {1}, 17, 30);
  REQUIRE(a.size() == 1);
  CHECK(a[0].pattern == b[0].pattern);
  CHECK(a[0].wavelength == b[0].wavelength);
  CHECK(a[0].wavelength == fourier::dominant_wavelength(a[0].pattern));
  CHECK((a[0].pattern.flat().array().abs() == 1.0).all());
}
