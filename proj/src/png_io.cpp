#include "turing/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "turing/tensor_io.hpp"

namespace turing {
namespace {

std::vector<std::uint8_t> encode_rgb(const std::vector<std::uint8_t>& rgb, Index height, Index width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw PngError(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw PngError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

// Interleave a C x H x W tensor into RGB bytes via `to_byte`.
template <typename ToByte>
std::vector<std::uint8_t> interleave(const Tensor3& t, ToByte to_byte) {
  require(t.channels() == 1 || t.channels() == 3, "png: tensor must have 1 or 3 channels");
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3 * t.height() * t.width()));
  for (Index i = 0; i < t.height(); ++i) {
    for (Index j = 0; j < t.width(); ++j) {
      for (Index c = 0; c < 3; ++c) {
        const Index src = t.channels() == 1 ? 0 : c;
        rgb[static_cast<std::size_t>(3 * (i * t.width() + j) + c)] = to_byte(t(src, i, j));
      }
    }
  }
  return rgb;
}

}  // namespace

std::vector<std::uint8_t> pattern_to_png(const Tensor3& pattern) {
  for (Index k = 0; k < pattern.size(); ++k) {
    const double v = pattern.flat()[k];
    require(v == 1.0 || v == -1.0, "pattern_to_png: pattern entries must be +/-1");
  }
  auto rgb = interleave(pattern, [](double v) -> std::uint8_t { return v > 0 ? 255 : 0; });
  return encode_rgb(rgb, pattern.height(), pattern.width());
}

std::vector<std::uint8_t> signed_tensor_to_png(const Tensor3& t) {
  const double scale = t.max_abs() > 0 ? t.max_abs() : 1.0;
  auto rgb = interleave(t, [scale](double v) -> std::uint8_t {
    return static_cast<std::uint8_t>(std::lround(127.5 * (v / scale + 1.0)));
  });
  return encode_rgb(rgb, t.height(), t.width());
}

std::vector<std::uint8_t> image_to_png(const Image& image) {
  auto rgb = interleave(image, [](double v) -> std::uint8_t {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  });
  return encode_rgb(rgb, image.height(), image.width());
}

Image image_from_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw PngError(std::string("png decode: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw PngError(std::string("png decode: ") + image.message);
  }
  const Index h = image.height;
  const Index w = image.width;
  Image out(3, h, w);
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      for (Index c = 0; c < 3; ++c) out(c, i, j) = rgb[static_cast<std::size_t>(3 * (i * w + j) + c)];
    }
  }
  return out;
}

Image load_png(const std::filesystem::path& path) {
  return image_from_png(read_file_bytes(path));
}

}  // namespace turing
