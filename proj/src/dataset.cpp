#include "turing/dataset.hpp"

#include <cmath>
#include <numbers>

#include "turing/error.hpp"
#include "turing/rng.hpp"

namespace turing::data {

std::vector<Image> synthetic_images(Index count, const nn::Shape& shape, std::uint64_t seed) {
  require(count >= 1, "synthetic_images: count must be positive");
  require(shape.channels == 3 && shape.height >= 1 && shape.width >= 1, "synthetic_images: need a 3 x H x W shape");
  Rng rng = make_rng(seed, "data");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double H = static_cast<double>(shape.height);
  const double W = static_cast<double>(shape.width);

  std::vector<Image> images;
  images.reserve(static_cast<std::size_t>(count));
  for (Index n = 0; n < count; ++n) {
    Image im(3, shape.height, shape.width);
    // Background: base colour plus two low-frequency waves per channel.
    for (Index c = 0; c < 3; ++c) {
      const double base = 40.0 + 175.0 * unit(rng);
      double fy[2], fx[2], ph[2], amp[2];
      for (int k = 0; k < 2; ++k) {
        fy[k] = 3.0 * unit(rng);
        fx[k] = 3.0 * unit(rng);
        ph[k] = two_pi * unit(rng);
        amp[k] = 25.0 * unit(rng);
      }
      for (Index i = 0; i < shape.height; ++i) {
        for (Index j = 0; j < shape.width; ++j) {
          double v = base;
          for (int k = 0; k < 2; ++k) v += amp[k] * std::cos(two_pi * (fy[k] * i / H + fx[k] * j / W) + ph[k]);
          im(c, i, j) = v;
        }
      }
    }
    // One foreground shape in a random colour.
    const int kind = static_cast<int>(unit(rng) * 3.0);
    const double cy = H * unit(rng), cx = W * unit(rng);
    const double ry = H * (0.1 + 0.25 * unit(rng)), rx = W * (0.1 + 0.25 * unit(rng));
    const double angle = std::numbers::pi * unit(rng);
    const double period = 4.0 + 8.0 * unit(rng);
    double colour[3];
    for (double& v : colour) v = 255.0 * unit(rng);
    for (Index i = 0; i < shape.height; ++i) {
      for (Index j = 0; j < shape.width; ++j) {
        const double dy = (static_cast<double>(i) - cy) / ry, dx = (static_cast<double>(j) - cx) / rx;
        bool inside = false;
        if (kind == 0) {
          inside = dy * dy + dx * dx <= 1.0;
        } else if (kind == 1) {
          inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        } else {
          const double t = static_cast<double>(i) * std::sin(angle) + static_cast<double>(j) * std::cos(angle);
          inside = std::fmod(std::abs(t), period) < period / 2.0;
        }
        if (inside) {
          for (Index c = 0; c < 3; ++c) im(c, i, j) = colour[c];
        }
      }
    }
    im.flat() = im.flat().array().round().cwiseMax(0.0).cwiseMin(255.0).matrix();
    images.push_back(std::move(im));
  }
  return images;
}

}  // namespace turing::data
