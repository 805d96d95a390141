#ifndef TURING_CONV_NET_HPP
#define TURING_CONV_NET_HPP

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <vector>

#include "turing/core_tensors.hpp"

namespace turing::nn {

struct Shape {
  Index channels = 0;
  Index height = 0;
  Index width = 0;
  Index size() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense 2D convolution with zero padding. Weight rows are output channels,
// columns are (input channel, kernel row, kernel col) in row-major order.
struct ConvLayer {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index stride = 1;
  Index pad = 1;
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  Shape output_shape(const Shape& in) const;
};

// conv -> ReLU stack, optionally followed by global average pooling and a
// linear readout. Activations are flattened channel-major (C x H x W).
class ConvNet {
 public:
  ConvNet(Shape input, std::vector<ConvLayer> layers, Eigen::MatrixXd readout = {},
          Eigen::VectorXd readout_bias = {});

  const Shape& input_shape() const noexcept { return shapes_.front(); }
  // Shape after layer `layer` (1-based); layer 0 is the input.
  const Shape& shape(int layer) const { return shapes_.at(static_cast<std::size_t>(layer)); }
  int depth() const noexcept { return static_cast<int>(layers_.size()); }
  const ConvLayer& layer(int layer) const { return layers_.at(static_cast<std::size_t>(layer - 1)); }
  Index n_classes() const noexcept { return readout_.rows(); }

  // Pre-activations M_j f_{j-1}(x) for j = 1..upto.
  std::vector<Eigen::VectorXd> preactivations(const Eigen::VectorXd& x, int upto) const;
  // f_layer(x).
  Eigen::VectorXd features(const Eigen::VectorXd& x, int layer) const;
  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;

  // Sparse matrix of the (bias-free) linear part of `layer`: d_layer x d_{layer-1}.
  Eigen::SparseMatrix<double> conv_matrix(int layer) const;

  // Linear part of `layer` applied to v, and its adjoint.
  Eigen::VectorXd apply_linear(int layer, const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply_linear_transpose(int layer, const Eigen::VectorXd& y) const;

 private:
  std::vector<Shape> shapes_;
  std::vector<ConvLayer> layers_;
  Eigen::MatrixXd readout_;
  Eigen::VectorXd readout_bias_;
};

struct NetConfig {
  Shape input{3, 32, 32};
  std::vector<Index> channels{8, 16, 32};
  Index kernel = 3;
  Index stride = 1;
  Index n_classes = 0;  // 0: no readout
  // Weights ~ N(weight_mean / fan_in, 2 / fan_in), so each output unit has
  // expected DC gain weight_mean; biases ~ N(0, bias_std^2).
  double weight_mean = 0.0;
  double bias_std = 0.0;
  std::uint64_t seed = 0;
};

ConvNet make_random_net(const NetConfig& config);

// argmax with ties resolved to the lowest index.
Index argmax(const Eigen::VectorXd& v);

}  // namespace turing::nn

#endif  // TURING_CONV_NET_HPP
