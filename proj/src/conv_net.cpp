#include "turing/conv_net.hpp"

#include <cmath>

#include "turing/rng.hpp"

namespace turing::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Columns are output positions, rows are (channel, kernel row, kernel col).
Eigen::MatrixXd im2col(const Eigen::VectorXd& x, const Shape& in, const ConvLayer& layer,
                       const Shape& out) {
  const Index k = layer.kernel;
  Eigen::MatrixXd col = Eigen::MatrixXd::Zero(in.channels * k * k, out.height * out.width);
  for (Index oi = 0; oi < out.height; ++oi) {
    for (Index oj = 0; oj < out.width; ++oj) {
      const Index p = oi * out.width + oj;
      for (Index c = 0; c < in.channels; ++c) {
        for (Index a = 0; a < k; ++a) {
          const Index ii = oi * layer.stride - layer.pad + a;
          if (ii < 0 || ii >= in.height) continue;
          for (Index b = 0; b < k; ++b) {
            const Index jj = oj * layer.stride - layer.pad + b;
            if (jj < 0 || jj >= in.width) continue;
            col((c * k + a) * k + b, p) = x[(c * in.height + ii) * in.width + jj];
          }
        }
      }
    }
  }
  return col;
}

Eigen::VectorXd col2im(const Eigen::MatrixXd& col, const Shape& in, const ConvLayer& layer,
                       const Shape& out) {
  const Index k = layer.kernel;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(in.size());
  for (Index oi = 0; oi < out.height; ++oi) {
    for (Index oj = 0; oj < out.width; ++oj) {
      const Index p = oi * out.width + oj;
      for (Index c = 0; c < in.channels; ++c) {
        for (Index a = 0; a < k; ++a) {
          const Index ii = oi * layer.stride - layer.pad + a;
          if (ii < 0 || ii >= in.height) continue;
          for (Index b = 0; b < k; ++b) {
            const Index jj = oj * layer.stride - layer.pad + b;
            if (jj < 0 || jj >= in.width) continue;
            x[(c * in.height + ii) * in.width + jj] += col((c * k + a) * k + b, p);
          }
        }
      }
    }
  }
  return x;
}

Eigen::VectorXd flatten_rows(const RowMatrix& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

Shape ConvLayer::output_shape(const Shape& in) const {
  return {out_channels, (in.height + 2 * pad - kernel) / stride + 1,
          (in.width + 2 * pad - kernel) / stride + 1};
}

ConvNet::ConvNet(Shape input, std::vector<ConvLayer> layers, Eigen::MatrixXd readout,
                 Eigen::VectorXd readout_bias)
    : layers_(std::move(layers)), readout_(std::move(readout)), readout_bias_(std::move(readout_bias)) {
  require(input.size() > 0, "ConvNet: empty input shape");
  shapes_.push_back(input);
  for (const ConvLayer& l : layers_) {
    require(l.in_channels == shapes_.back().channels, "ConvNet: layer channel counts do not chain");
    require(l.weight.rows() == l.out_channels && l.weight.cols() == l.in_channels * l.kernel * l.kernel,
            "ConvNet: weight shape inconsistent with layer");
    require(l.bias.size() == l.out_channels, "ConvNet: bias size inconsistent with layer");
    const Shape out = l.output_shape(shapes_.back());
    require(out.height > 0 && out.width > 0, "ConvNet: layer output is empty");
    shapes_.push_back(out);
  }
  if (readout_.size() > 0) {
    require(readout_.cols() == shapes_.back().channels, "ConvNet: readout width != last channels");
    if (readout_bias_.size() == 0) readout_bias_ = Eigen::VectorXd::Zero(readout_.rows());
    require(readout_bias_.size() == readout_.rows(), "ConvNet: readout bias size");
  }
}

std::vector<Eigen::VectorXd> ConvNet::preactivations(const Eigen::VectorXd& x, int upto) const {
  require(upto >= 0 && upto <= depth(), "ConvNet: layer index out of range");
  require(x.size() == input_shape().size(), "ConvNet: input size mismatch");
  std::vector<Eigen::VectorXd> pre;
  Eigen::VectorXd f = x;
  for (int j = 1; j <= upto; ++j) {
    const ConvLayer& l = layer(j);
    const Shape& out = shapes_[j];
    RowMatrix z = l.weight * im2col(f, shapes_[j - 1], l, out);
    z.colwise() += l.bias;
    pre.push_back(flatten_rows(z));
    f = pre.back().cwiseMax(0.0);
  }
  return pre;
}

Eigen::VectorXd ConvNet::features(const Eigen::VectorXd& x, int layer_index) const {
  if (layer_index == 0) return x;
  return preactivations(x, layer_index).back().cwiseMax(0.0);
}

Eigen::VectorXd ConvNet::logits(const Eigen::VectorXd& x) const {
  require(readout_.size() > 0, "ConvNet: network has no readout");
  const Eigen::VectorXd f = features(x, depth());
  const Shape& s = shapes_.back();
  const Eigen::Map<const RowMatrix> maps(f.data(), s.channels, s.height * s.width);
  const Eigen::VectorXd pooled = maps.rowwise().mean();
  return readout_ * pooled + readout_bias_;
}

Eigen::SparseMatrix<double> ConvNet::conv_matrix(int layer_index) const {
  const ConvLayer& l = layer(layer_index);
  const Shape& in = shapes_[layer_index - 1];
  const Shape& out = shapes_[layer_index];
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(out.size() * in.channels * l.kernel * l.kernel));
  for (Index co = 0; co < out.channels; ++co) {
    for (Index oi = 0; oi < out.height; ++oi) {
      for (Index oj = 0; oj < out.width; ++oj) {
        const Index row = (co * out.height + oi) * out.width + oj;
        for (Index ci = 0; ci < in.channels; ++ci) {
          for (Index a = 0; a < l.kernel; ++a) {
            const Index ii = oi * l.stride - l.pad + a;
            if (ii < 0 || ii >= in.height) continue;
            for (Index b = 0; b < l.kernel; ++b) {
              const Index jj = oj * l.stride - l.pad + b;
              if (jj < 0 || jj >= in.width) continue;
              entries.emplace_back(row, (ci * in.height + ii) * in.width + jj,
                                   l.weight(co, (ci * l.kernel + a) * l.kernel + b));
            }
          }
        }
      }
    }
  }
  Eigen::SparseMatrix<double> m(out.size(), in.size());
  m.setFromTriplets(entries.begin(), entries.end());
  return m;
}

Eigen::VectorXd ConvNet::apply_linear(int layer_index, const Eigen::VectorXd& v) const {
  const ConvLayer& l = layer(layer_index);
  const RowMatrix z = l.weight * im2col(v, shapes_[layer_index - 1], l, shapes_[layer_index]);
  return flatten_rows(z);
}

Eigen::VectorXd ConvNet::apply_linear_transpose(int layer_index, const Eigen::VectorXd& y) const {
  const ConvLayer& l = layer(layer_index);
  const Shape& out = shapes_[layer_index];
  const Eigen::Map<const RowMatrix> ym(y.data(), out.channels, out.height * out.width);
  const Eigen::MatrixXd col = l.weight.transpose() * ym;
  return col2im(col, shapes_[layer_index - 1], l, out);
}

ConvNet make_random_net(const NetConfig& config) {
  Rng rng = make_rng(config.seed, "net-weights");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ConvLayer> layers;
  Index in_channels = config.input.channels;
  for (const Index out_channels : config.channels) {
    ConvLayer l;
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.kernel = config.kernel;
    l.stride = config.stride;
    l.pad = config.kernel / 2;
    const double fan_in = static_cast<double>(in_channels * l.kernel * l.kernel);
    const double scale = std::sqrt(2.0 / fan_in);
    l.weight.resize(out_channels, in_channels * l.kernel * l.kernel);
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) {
        l.weight(r, c) = config.weight_mean / fan_in + scale * normal(rng);
      }
    }
    l.bias.resize(out_channels);
    for (Index r = 0; r < out_channels; ++r) l.bias[r] = config.bias_std * normal(rng);
    layers.push_back(std::move(l));
    in_channels = out_channels;
  }
  Eigen::MatrixXd readout;
  Eigen::VectorXd readout_bias;
  if (config.n_classes > 0) {
    readout.resize(config.n_classes, in_channels);
    const double scale = std::sqrt(1.0 / static_cast<double>(in_channels));
    for (Index r = 0; r < readout.rows(); ++r) {
      for (Index c = 0; c < readout.cols(); ++c) readout(r, c) = scale * normal(rng);
    }
    readout_bias = Eigen::VectorXd::Zero(config.n_classes);
  }
  return ConvNet(config.input, std::move(layers), std::move(readout), std::move(readout_bias));
}

Index argmax(const Eigen::VectorXd& v) {
  require(v.size() > 0, "argmax of empty vector");
  Index best = 0;
  for (Index k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace turing::nn
