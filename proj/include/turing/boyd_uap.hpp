#ifndef TURING_BOYD_UAP_HPP
#define TURING_BOYD_UAP_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "turing/conv_net.hpp"
#include "turing/core_tensors.hpp"

namespace turing::boyd {

// Signed power sign(z)|z|^(r-1), with psi(0, r) = 0 for every r >= 1.
template <typename Scalar>
Scalar psi(Scalar z, Scalar r) {
  if (z == Scalar(0)) return Scalar(0);
  const Scalar magnitude = std::pow(std::abs(z), r - Scalar(1));
  return z > Scalar(0) ? magnitude : -magnitude;
}

template <typename Derived>
auto psi(const Eigen::ArrayBase<Derived>& z, typename Derived::Scalar r) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([r](Scalar v) { return psi<Scalar>(v, r); });
}

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct BoydConfig {
  double p = 2.0;  // 2 or infinity
  double q = 2.0;  // 1 or 2
  int max_iters = 1000;
  double tol = 1e-12;

  // Hoelder conjugate p' with 1/p + 1/p' = 1 (p = inf gives 1).
  double p_conjugate() const { return std::isinf(p) ? 1.0 : p / (p - 1.0); }
  void validate() const;
};

// A map J : R^cols -> R^rows together with its adjoint.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& v) const = 0;
  virtual Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const = 0;
};

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {}
  Index rows() const override { return matrix_.rows(); }
  Index cols() const override { return matrix_.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override { return matrix_ * v; }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const override {
    return matrix_.transpose() * y;
  }

 private:
  Eigen::MatrixXd matrix_;
};

// Stacked Jacobian J_i(X_b) = [J_i(x_1); ...; J_i(x_b)] of a conv-ReLU
// network, applied matrix-free through the masked linear layers.
class BatchJacobianOperator final : public LinearOperator {
 public:
  BatchJacobianOperator(const nn::ConvNet& net, const std::vector<Eigen::VectorXd>& batch, int layer);
  Index rows() const override;
  Index cols() const override;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const override;

 private:
  const nn::ConvNet* net_;
  int layer_;
  // masks_[b][j] = theta(pre-activation of layer j+1 for image b)
  std::vector<std::vector<Eigen::VectorXd>> masks_;
};

struct BoydResult {
  Eigen::VectorXd eps;
  std::vector<double> objective;  // sum ||J eps_t||_q^q per iterate
  int iterations = 0;
  bool converged = false;
};

// eps_{t+1} = psi_{p'}(J^T psi_q(J eps_t)), normalised to unit p-norm; for
// p = inf the update is sign(J^T psi_q(J eps_t)) with sign(0) := +1. Stops
// when ||eps_{t+1} - eps_t||_inf < tol or after max_iters.
BoydResult boyd_iterate(const LinearOperator& jac, const BoydConfig& config, const Eigen::VectorXd& eps0);
// Same iteration driven by a Gram matrix G = J^T J (requires q = 2).
BoydResult boyd_iterate_gram(const Eigen::MatrixXd& gram, const BoydConfig& config,
                             const Eigen::VectorXd& eps0);

struct JacobianResult {
  Eigen::MatrixXd matrix;
  // Units whose pre-activation is exactly 0; theta(0) := 0 was used for them.
  Index zero_preactivations = 0;
};

// Dense J_i(x) = D_i M_i ... D_1 M_1 by the chain rule.
JacobianResult jacobian(const nn::ConvNet& net, const Eigen::VectorXd& x, int layer);

// sum_x J_i(x)^T J_i(x).
Eigen::MatrixXd batch_gram(const nn::ConvNet& net, const std::vector<Eigen::VectorXd>& batch, int layer);

// Fraction of positive pre-activations at `layer` over the batch: the
// empirical counterpart of E[D_j] ~ c_j I.
double activation_rate(const nn::ConvNet& net, const std::vector<Eigen::VectorXd>& batch, int layer);

// How closely M_{(c,i,j),(c',i+m,j+l)} depends on (c, c', m, l) only, over
// interior cells (at least `max_offset` from every edge) and offsets
// |m|,|l| <= max_offset (default min(H,W)/4):
//   1 - mean_offsets(std) / mean_offsets(|mean|), clamped to [0, 1].
double convolutionality_score(const Eigen::MatrixXd& m, const nn::Shape& geometry, Index max_offset = 0);

// Periodic 2D convolution matrix of a single-channel kernel on an H x W torus.
Eigen::MatrixXd periodic_convolution_matrix(const Grid2D& kernel, Index height, Index width);

// 1D circulant matrix whose first row starts with `stencil` (mirrored so the
// result is symmetric): B(l, l +/- k) = stencil[k].
Eigen::MatrixXd symmetric_circulant(const std::vector<double>& stencil, Index n);

struct DiagMatrixModel {
  double c = 0.5;  // P(D_ll = 1)
  // Optional offset -> Cov(D_ll, D_mm) for l != m, indexed by |l - m|; empty
  // means independent entries. Only used for the expectation.
  std::vector<double> covariance_stencil;
};

// B o C with C_ll = c and C_lm = c^2 + covariance_stencil[|l-m|].
Eigen::MatrixXd expected_dbd(const Eigen::MatrixXd& b, const DiagMatrixModel& model);

struct Theorem1Report {
  Eigen::MatrixXd estimate;   // Monte-Carlo mean of D B D
  Eigen::MatrixXd expected;   // B o C
  double max_abs_deviation = 0;
  double max_z_score = 0;     // max |deviation| / standard error over entries
  Index entries_tested = 0;   // distinct entries with non-zero variance
  // Per-entry z threshold at the family-wise confidence of a single 3 sigma
  // interval (99.73%), Sidak-corrected for entries_tested comparisons.
  double z_threshold = 0;
  double bound = 0;           // z_threshold x largest per-entry standard error
  bool within_bound = false;  // every entry within z_threshold standard errors
  Index samples = 0;
};

// Draws D with independent Bernoulli(c) diagonal entries and compares the
// sample mean of D B D with B o C.
Theorem1Report theorem1_mc_check(const Eigen::MatrixXd& b, const DiagMatrixModel& model, Index samples,
                                 std::uint64_t seed);

struct LayerPattern {
  int layer = 0;
  double wavelength = 0;
  int iterations = 0;
  bool converged = false;
  double activation_rate = 0;
  Tensor3 pattern;  // +/-1, input shape
};

// Boyd (p = inf, q = 2) perturbation per requested layer, with the dominant
// wavelength of each resulting sign map.
std::vector<LayerPattern> depth_feature_size(const nn::ConvNet& net,
                                             const std::vector<Eigen::VectorXd>& batch,
                                             const std::vector<int>& layers, std::uint64_t seed,
                                             int max_iters = 100);

// Seeded iid N(0, 1) inputs for the diagnostics.
std::vector<Eigen::VectorXd> random_inputs(const nn::Shape& shape, Index count, std::uint64_t seed);

// The bundled diagnostic networks.
nn::ConvNet gram_diagnostic_net(std::uint64_t seed);   // 1x16x16 input, 2 conv layers
nn::ConvNet depth_diagnostic_net(std::uint64_t seed);  // 3x32x32 input, 3 conv layers
inline constexpr std::uint64_t kBundledNetSeed = 2020;

}  // namespace turing::boyd

#endif  // TURING_BOYD_UAP_HPP
