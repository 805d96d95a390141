#ifndef TURING_CORE_TENSORS_HPP
#define TURING_CORE_TENSORS_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>

#include "turing/error.hpp"

namespace turing {

using Index = Eigen::Index;

// Row-major 2D grid. Row index i runs over height, column index j over width.
template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Grid2D = Grid<double>;

enum class BoundaryMode { Periodic, ZeroPad };

BoundaryMode parse_boundary_mode(const std::string& name);
const char* to_string(BoundaryMode mode);

// Channel-major C x H x W block of doubles in one contiguous buffer, so the
// whole tensor flattens to a vector without copying (NCHW order, N = 1).
class Tensor3 {
 public:
  using ChannelMap = Eigen::Map<Grid2D>;
  using ConstChannelMap = Eigen::Map<const Grid2D>;

  Tensor3() = default;
  Tensor3(Index channels, Index height, Index width, double fill = 0.0);

  static Tensor3 from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, Index channels,
                           Index height, Index width);

  Index channels() const noexcept { return channels_; }
  Index height() const noexcept { return height_; }
  Index width() const noexcept { return width_; }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  ChannelMap channel(Index c) {
    return ChannelMap(data_.data() + c * height_ * width_, height_, width_);
  }
  ConstChannelMap channel(Index c) const {
    return ConstChannelMap(data_.data() + c * height_ * width_, height_, width_);
  }

  double& operator()(Index c, Index i, Index j) {
    return data_[(c * height_ + i) * width_ + j];
  }
  double operator()(Index c, Index i, Index j) const {
    return data_[(c * height_ + i) * width_ + j];
  }

  Eigen::VectorXd& flat() noexcept { return data_; }
  const Eigen::VectorXd& flat() const noexcept { return data_; }

  bool same_shape(const Tensor3& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  std::string shape_string() const;

  double max_abs() const { return data_.size() == 0 ? 0.0 : data_.cwiseAbs().maxCoeff(); }
  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  Index channels_ = 0;
  Index height_ = 0;
  Index width_ = 0;
  Eigen::VectorXd data_;
};

// Images and perturbations share the tensor layout; the aliases document
// which invariant a value is expected to satisfy ([0,255] vs. max-norm bound).
using Image = Tensor3;
using Perturbation = Tensor3;

namespace detail {

template <typename Derived>
Grid<typename Derived::Scalar> pad_grid(const Eigen::MatrixBase<Derived>& grid, Index rh, Index rw,
                                        BoundaryMode mode) {
  using Scalar = typename Derived::Scalar;
  const Index h = grid.rows();
  const Index w = grid.cols();
  Grid<Scalar> padded = Grid<Scalar>::Zero(h + 2 * rh, w + 2 * rw);
  padded.block(rh, rw, h, w) = grid;
  if (mode == BoundaryMode::ZeroPad) return padded;
  // Wrap rows first, then columns over the full padded height so corners wrap too.
  if (rh > 0) {
    padded.block(0, rw, rh, w) = grid.bottomRows(rh);
    padded.block(rh + h, rw, rh, w) = grid.topRows(rh);
  }
  if (rw > 0) {
    padded.block(0, 0, h + 2 * rh, rw) = padded.block(0, w, h + 2 * rh, rw);
    padded.block(0, rw + w, h + 2 * rh, rw) = padded.block(0, rw, h + 2 * rh, rw);
  }
  return padded;
}

}  // namespace detail

// Correlation-style 2D convolution:
//   out(i,j) = sum_{m,l} K(m,l) * n(i+m, j+l),  m,l centred on the kernel.
// Out-of-range n is wrapped (Periodic) or read as zero (ZeroPad). Each output
// cell accumulates kernel taps in row-major kernel order starting from zero.
template <typename Derived, typename KernelDerived>
Grid<typename Derived::Scalar> convolve2d(const Eigen::MatrixBase<Derived>& grid,
                                          const Eigen::MatrixBase<KernelDerived>& kernel,
                                          BoundaryMode mode) {
  using Scalar = typename Derived::Scalar;
  require(kernel.rows() % 2 == 1 && kernel.cols() % 2 == 1,
          "convolve2d: kernel dimensions must be odd");
  require(kernel.rows() <= grid.rows() && kernel.cols() <= grid.cols(),
          "convolve2d: kernel larger than grid");
  const Index h = grid.rows();
  const Index w = grid.cols();
  const Index rh = kernel.rows() / 2;
  const Index rw = kernel.cols() / 2;
  const Grid<Scalar> padded = detail::pad_grid(grid, rh, rw, mode);
  Grid<Scalar> out = Grid<Scalar>::Zero(h, w);
  for (Index a = 0; a < kernel.rows(); ++a) {
    for (Index b = 0; b < kernel.cols(); ++b) {
      const Scalar k = kernel(a, b);
      if (k == Scalar(0)) continue;
      out.noalias() += k * padded.block(a, b, h, w);
    }
  }
  return out;
}

// Periodic shift: out(i,j) = g((i - dy) mod H, (j - dx) mod W).
template <typename Derived>
Grid<typename Derived::Scalar> cyclic_shift(const Eigen::MatrixBase<Derived>& g, Index dy, Index dx) {
  const Index h = g.rows();
  const Index w = g.cols();
  Grid<typename Derived::Scalar> out(h, w);
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      out(((i + dy) % h + h) % h, ((j + dx) % w + w) % w) = g(i, j);
    }
  }
  return out;
}

enum class PatternScaling {
  // Pattern holds +/-1 values, multiplied by the budget before adding.
  SignPattern,
  // Pattern is already a perturbation with max-norm <= budget.
  Prescaled,
};

// clip(image + budget * pattern, 0, 255) for SignPattern,
// clip(image + pattern, 0, 255) for Prescaled.
Image apply_perturbation(const Image& image, const Tensor3& pattern, double budget,
                         PatternScaling scaling = PatternScaling::SignPattern);

}  // namespace turing

#endif  // TURING_CORE_TENSORS_HPP
