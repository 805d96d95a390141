#include "turing/core_tensors.hpp"

#include <algorithm>
#include <sstream>

namespace turing {

BoundaryMode parse_boundary_mode(const std::string& name) {
  if (name == "periodic") return BoundaryMode::Periodic;
  if (name == "zero" || name == "zeropad") return BoundaryMode::ZeroPad;
  throw ValidationError("unknown boundary mode '" + name + "' (expected periodic|zero)");
}

const char* to_string(BoundaryMode mode) {
  return mode == BoundaryMode::Periodic ? "periodic" : "zero";
}

Tensor3::Tensor3(Index channels, Index height, Index width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels >= 0 && height >= 0 && width >= 0, "Tensor3: negative dimension");
  data_ = Eigen::VectorXd::Constant(channels * height * width, fill);
}

Tensor3 Tensor3::from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, Index channels,
                           Index height, Index width) {
  require(flat.size() == channels * height * width, "Tensor3::from_flat: size mismatch");
  Tensor3 t(channels, height, width);
  t.data_ = flat;
  return t;
}

std::string Tensor3::shape_string() const {
  std::ostringstream os;
  os << channels_ << "x" << height_ << "x" << width_;
  return os.str();
}

Image apply_perturbation(const Image& image, const Tensor3& pattern, double budget,
                         PatternScaling scaling) {
  require(budget > 0.0, "apply_perturbation: budget must be positive");
  require(image.same_shape(pattern), "apply_perturbation: shape mismatch (image " +
                                         image.shape_string() + ", pattern " +
                                         pattern.shape_string() + ")");
  Image out(image.channels(), image.height(), image.width());
  if (scaling == PatternScaling::SignPattern) {
    out.flat() = (image.flat() + budget * pattern.flat()).cwiseMax(0.0).cwiseMin(255.0);
  } else {
    require(pattern.max_abs() <= budget * (1.0 + 1e-12),
            "apply_perturbation: perturbation exceeds budget");
    out.flat() = (image.flat() + pattern.flat()).cwiseMax(0.0).cwiseMin(255.0);
  }
  return out;
}

}  // namespace turing
