#include "turing/boyd_uap.hpp"

#include <random>

#include "turing/fourier.hpp"
#include "turing/rng.hpp"

namespace turing::boyd {

void BoydConfig::validate() const {
  require(p == 2.0 || std::isinf(p), "BoydConfig: p must be 2 or infinity");
  require(q == 1.0 || q == 2.0, "BoydConfig: q must be 1 or 2");
  require(max_iters >= 1, "BoydConfig: max_iters must be positive");
  require(tol >= 0.0, "BoydConfig: tol must be non-negative");
}

BatchJacobianOperator::BatchJacobianOperator(const nn::ConvNet& net,
                                             const std::vector<Eigen::VectorXd>& batch, int layer)
    : net_(&net), layer_(layer) {
  require(!batch.empty(), "BatchJacobianOperator: empty batch");
  require(layer >= 1 && layer <= net.depth(), "BatchJacobianOperator: layer out of range");
  masks_.reserve(batch.size());
  for (const Eigen::VectorXd& x : batch) {
    std::vector<Eigen::VectorXd> masks;
    for (const Eigen::VectorXd& z : net.preactivations(x, layer)) {
      masks.push_back((z.array() > 0.0).cast<double>().matrix());
    }
    masks_.push_back(std::move(masks));
  }
}

Index BatchJacobianOperator::rows() const {
  return static_cast<Index>(masks_.size()) * net_->shape(layer_).size();
}

Index BatchJacobianOperator::cols() const { return net_->input_shape().size(); }

Eigen::VectorXd BatchJacobianOperator::apply(const Eigen::VectorXd& v) const {
  const Index block = net_->shape(layer_).size();
  Eigen::VectorXd out(rows());
  for (std::size_t b = 0; b < masks_.size(); ++b) {
    Eigen::VectorXd u = v;
    for (int j = 1; j <= layer_; ++j) {
      u = masks_[b][j - 1].cwiseProduct(net_->apply_linear(j, u));
    }
    out.segment(static_cast<Index>(b) * block, block) = u;
  }
  return out;
}

Eigen::VectorXd BatchJacobianOperator::apply_transpose(const Eigen::VectorXd& y) const {
  const Index block = net_->shape(layer_).size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cols());
  for (std::size_t b = 0; b < masks_.size(); ++b) {
    Eigen::VectorXd u = y.segment(static_cast<Index>(b) * block, block);
    for (int j = layer_; j >= 1; --j) {
      u = net_->apply_linear_transpose(j, masks_[b][j - 1].cwiseProduct(u));
    }
    out += u;
  }
  return out;
}

namespace {

template <typename Update>
BoydResult iterate(const BoydConfig& config, const Eigen::VectorXd& eps0, Update&& update) {
  config.validate();
  require(eps0.size() > 0 && eps0.cwiseAbs().maxCoeff() > 0.0, "boyd_iterate: eps0 must be nonzero");
  const double p_conj = config.p_conjugate();
  BoydResult result;
  result.eps = eps0;
  for (int t = 0; t < config.max_iters; ++t) {
    double objective = 0.0;
    const Eigen::VectorXd g = update(result.eps, objective);
    result.objective.push_back(objective);
    if (g.cwiseAbs().maxCoeff() == 0.0) throw NumericalError("boyd_iterate: degenerate iterate (zero update)");
    Eigen::VectorXd next;
    if (std::isinf(config.p)) {
      next = g.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    } else {
      next = psi(g.array(), p_conj).matrix();
      const double norm = next.norm();  // p = 2
      if (!(norm > 0.0)) throw NumericalError("boyd_iterate: degenerate iterate (zero norm)");
      next /= norm;
    }
    const double change = (next - result.eps).cwiseAbs().maxCoeff();
    result.eps = std::move(next);
    result.iterations = t + 1;
    if (change < config.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

BoydResult boyd_iterate(const LinearOperator& jac, const BoydConfig& config, const Eigen::VectorXd& eps0) {
  require(eps0.size() == jac.cols(), "boyd_iterate: eps0 size != operator columns");
  return iterate(config, eps0, [&](const Eigen::VectorXd& eps, double& objective) {
    const Eigen::VectorXd y = jac.apply(eps);
    objective = y.array().abs().pow(config.q).sum();
    return jac.apply_transpose(psi(y.array(), config.q).matrix());
  });
}

BoydResult boyd_iterate_gram(const Eigen::MatrixXd& gram, const BoydConfig& config,
                             const Eigen::VectorXd& eps0) {
  require(config.q == 2.0, "boyd_iterate_gram: a Gram matrix only determines the q = 2 iteration");
  require(gram.rows() == gram.cols() && gram.cols() == eps0.size(), "boyd_iterate_gram: size mismatch");
  return iterate(config, eps0, [&](const Eigen::VectorXd& eps, double& objective) {
    Eigen::VectorXd g = gram * eps;
    objective = eps.dot(g);
    return g;
  });
}

JacobianResult jacobian(const nn::ConvNet& net, const Eigen::VectorXd& x, int layer) {
  require(layer >= 1 && layer <= net.depth(), "jacobian: layer out of range");
  const std::vector<Eigen::VectorXd> pre = net.preactivations(x, layer);
  JacobianResult result;
  Eigen::MatrixXd j = Eigen::MatrixXd::Identity(x.size(), x.size());
  for (int l = 1; l <= layer; ++l) {
    const Eigen::VectorXd& z = pre[static_cast<std::size_t>(l - 1)];
    result.zero_preactivations += (z.array() == 0.0).count();
    const Eigen::VectorXd mask = (z.array() > 0.0).cast<double>().matrix();
    j = mask.asDiagonal() * (net.conv_matrix(l) * j);
  }
  result.matrix = std::move(j);
  return result;
}

Eigen::MatrixXd batch_gram(const nn::ConvNet& net, const std::vector<Eigen::VectorXd>& batch, int layer) {
  require(!batch.empty(), "batch_gram: empty batch");
  const Index d = net.input_shape().size();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  for (const Eigen::VectorXd& x : batch) {
    const Eigen::MatrixXd j = jacobian(net, x, layer).matrix;
    gram.selfadjointView<Eigen::Lower>().rankUpdate(j.transpose());
  }
  return gram.selfadjointView<Eigen::Lower>();
}

double activation_rate(const nn::ConvNet& net, const std::vector<Eigen::VectorXd>& batch, int layer) {
  require(!batch.empty(), "activation_rate: empty batch");
  double active = 0.0;
  double total = 0.0;
  for (const Eigen::VectorXd& x : batch) {
    const Eigen::VectorXd z = net.preactivations(x, layer).back();
    active += static_cast<double>((z.array() > 0.0).count());
    total += static_cast<double>(z.size());
  }
  return active / total;
}

double convolutionality_score(const Eigen::MatrixXd& m, const nn::Shape& geometry, Index max_offset) {
  const Index n = geometry.size();
  require(m.rows() == n && m.cols() == n,
          "convolutionality_score: matrix is not square with side C*H*W of the geometry");
  const Index reach = max_offset > 0 ? max_offset : std::max<Index>(1, std::min(geometry.height, geometry.width) / 4);
  require(2 * reach < geometry.height && 2 * reach < geometry.width,
          "convolutionality_score: geometry too small for the offset range");
  auto index = [&](Index c, Index i, Index j) { return (c * geometry.height + i) * geometry.width + j; };
  double sum_std = 0.0;
  double sum_mean = 0.0;
  Index groups = 0;
  for (Index c = 0; c < geometry.channels; ++c) {
    for (Index c2 = 0; c2 < geometry.channels; ++c2) {
      for (Index dm = -reach; dm <= reach; ++dm) {
        for (Index dl = -reach; dl <= reach; ++dl) {
          // Two passes: the one-pass E[v^2] - mean^2 form cancels badly.
          double s = 0.0;
          double count = 0.0;
          for (Index i = reach; i < geometry.height - reach; ++i) {
            for (Index j = reach; j < geometry.width - reach; ++j) {
              s += m(index(c, i, j), index(c2, i + dm, j + dl));
              count += 1.0;
            }
          }
          const double mean = s / count;
          double ss = 0.0;
          for (Index i = reach; i < geometry.height - reach; ++i) {
            for (Index j = reach; j < geometry.width - reach; ++j) {
              const double d = m(index(c, i, j), index(c2, i + dm, j + dl)) - mean;
              ss += d * d;
            }
          }
          sum_mean += std::abs(mean);
          sum_std += std::sqrt(ss / count);
          ++groups;
        }
      }
    }
  }
  const double mean_abs = sum_mean / static_cast<double>(groups);
  const double mean_std = sum_std / static_cast<double>(groups);
  if (mean_abs == 0.0) return mean_std == 0.0 ? 1.0 : 0.0;
  return std::clamp(1.0 - mean_std / mean_abs, 0.0, 1.0);
}

Eigen::MatrixXd periodic_convolution_matrix(const Grid2D& kernel, Index height, Index width) {
  require(kernel.rows() % 2 == 1 && kernel.cols() % 2 == 1, "periodic_convolution_matrix: odd kernel");
  const Index rh = kernel.rows() / 2;
  const Index rw = kernel.cols() / 2;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(height * width, height * width);
  for (Index i = 0; i < height; ++i) {
    for (Index j = 0; j < width; ++j) {
      for (Index a = 0; a < kernel.rows(); ++a) {
        for (Index b = 0; b < kernel.cols(); ++b) {
          const Index ii = ((i + a - rh) % height + height) % height;
          const Index jj = ((j + b - rw) % width + width) % width;
          m(i * width + j, ii * width + jj) += kernel(a, b);
        }
      }
    }
  }
  return m;
}

Eigen::MatrixXd symmetric_circulant(const std::vector<double>& stencil, Index n) {
  require(n >= 1, "symmetric_circulant: n must be positive");
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (Index l = 0; l < n; ++l) {
    for (std::size_t k = 0; k < stencil.size() && static_cast<Index>(k) < n; ++k) {
      const Index off = static_cast<Index>(k);
      b(l, (l + off) % n) = stencil[k];
      b(l, ((l - off) % n + n) % n) = stencil[k];
    }
  }
  return b;
}

Eigen::MatrixXd expected_dbd(const Eigen::MatrixXd& b, const DiagMatrixModel& model) {
  require(model.c >= 0.0 && model.c <= 1.0, "DiagMatrixModel: c must lie in [0,1]");
  require(b.rows() == b.cols(), "expected_dbd: B must be square");
  Eigen::MatrixXd out(b.rows(), b.cols());
  for (Index l = 0; l < b.rows(); ++l) {
    for (Index m = 0; m < b.cols(); ++m) {
      double second_moment = model.c * model.c;
      if (l == m) {
        second_moment = model.c;
      } else {
        const auto off = static_cast<std::size_t>(std::abs(l - m));
        if (off < model.covariance_stencil.size()) second_moment += model.covariance_stencil[off];
      }
      out(l, m) = b(l, m) * second_moment;
    }
  }
  return out;
}

namespace {

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// z such that k independent |N(0,1)| draws all stay below it with the same
// probability a single draw stays within `z_single`.
double sidak_threshold(double z_single, Index k) {
  const double alpha = 2.0 * normal_upper_tail(z_single);
  const double alpha_k = -std::expm1(std::log1p(-alpha) / static_cast<double>(k));
  double lo = z_single, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (2.0 * normal_upper_tail(mid) > alpha_k ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Theorem1Report theorem1_mc_check(const Eigen::MatrixXd& b, const DiagMatrixModel& model, Index samples,
                                 std::uint64_t seed) {
  require(samples >= 10000, "theorem1_mc_check: needs at least 1e4 samples");
  require(model.covariance_stencil.empty(),
          "theorem1_mc_check: sampling draws independent diagonal entries; covariance stencil unsupported");
  const Index n = b.rows();
  Theorem1Report report;
  report.expected = expected_dbd(b, model);
  report.samples = samples;

  Rng rng = make_rng(seed, "theorem1");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd d(n);
  for (Index s = 0; s < samples; ++s) {
    for (Index l = 0; l < n; ++l) d[l] = uniform(rng) < model.c ? 1.0 : 0.0;
    second.selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  second = second.selfadjointView<Eigen::Lower>();
  report.estimate = b.cwiseProduct(second / static_cast<double>(samples));

  const double c = model.c;
  const double root_n = std::sqrt(static_cast<double>(samples));
  double max_sigma = 0.0;
  Index random_entries = 0;
  for (Index l = 0; l < n; ++l) {
    for (Index m = 0; m < n; ++m) {
      const double var = l == m ? c * (1.0 - c) : c * c * (1.0 - c * c);
      const double sigma = std::abs(b(l, m)) * std::sqrt(var) / root_n;
      const double dev = std::abs(report.estimate(l, m) - report.expected(l, m));
      report.max_abs_deviation = std::max(report.max_abs_deviation, dev);
      max_sigma = std::max(max_sigma, sigma);
      if (m >= l && sigma > 0.0) ++random_entries;
      const double z = sigma > 0.0 ? dev / sigma : (dev > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      report.max_z_score = std::max(report.max_z_score, z);
    }
  }
  report.entries_tested = random_entries;
  report.z_threshold = sidak_threshold(3.0, std::max<Index>(random_entries, 1));
  report.bound = report.z_threshold * max_sigma;
  report.within_bound = report.max_z_score <= report.z_threshold;
  return report;
}

std::vector<LayerPattern> depth_feature_size(const nn::ConvNet& net, const std::vector<Eigen::VectorXd>& batch,
                                             const std::vector<int>& layers, std::uint64_t seed, int max_iters) {
  require(!layers.empty(), "depth_feature_size: no layers requested");
  const nn::Shape& in = net.input_shape();
  Rng rng = make_rng(seed, "boyd-eps0");
  Eigen::VectorXd eps0(in.size());
  for (Index k = 0; k < eps0.size(); ++k) eps0[k] = random_sign(rng);

  BoydConfig config;
  config.p = kInfinity;
  config.q = 2.0;
  config.max_iters = max_iters;
  config.tol = 0.5;  // sign vectors differ by 0 or 2 per entry

  std::vector<LayerPattern> out;
  for (const int layer : layers) {
    require(layer >= 1 && layer <= net.depth(), "depth_feature_size: layer out of range");
    const BatchJacobianOperator op(net, batch, layer);
    const BoydResult r = boyd_iterate(op, config, eps0);
    LayerPattern lp;
    lp.layer = layer;
    lp.iterations = r.iterations;
    lp.converged = r.converged;
    lp.pattern = Tensor3::from_flat(r.eps, in.channels, in.height, in.width);
    lp.wavelength = fourier::dominant_wavelength(lp.pattern);
    lp.activation_rate = activation_rate(net, batch, layer);
    out.push_back(std::move(lp));
  }
  return out;
}

std::vector<Eigen::VectorXd> random_inputs(const nn::Shape& shape, Index count, std::uint64_t seed) {
  Rng rng = make_rng(seed, "diagnostic-inputs");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    Eigen::VectorXd x(shape.size());
    for (Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    out.push_back(std::move(x));
  }
  return out;
}

nn::ConvNet gram_diagnostic_net(std::uint64_t seed) {
  nn::NetConfig config;
  config.input = {1, 16, 16};
  config.channels = {4, 4};
  config.bias_std = 0.1;
  config.seed = seed;
  return nn::make_random_net(config);
}

nn::ConvNet depth_diagnostic_net(std::uint64_t seed) {
  nn::NetConfig config;
  config.input = {3, 32, 32};
  config.channels = {8, 8, 8};
  // Filters with a low-pass component, as trained image filters tend to have.
  config.weight_mean = 2.0;
  config.bias_std = 0.1;
  config.seed = seed;
  return nn::make_random_net(config);
}

}  // namespace turing::boyd
