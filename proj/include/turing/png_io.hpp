#ifndef TURING_PNG_IO_HPP
#define TURING_PNG_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "turing/core_tensors.hpp"

namespace turing {

// +/-1 pattern to 8-bit RGB PNG: -1 -> 0, +1 -> 255. A single-channel
// pattern is replicated to gray RGB. Rejects any entry that is not +/-1.
std::vector<std::uint8_t> pattern_to_png(const Tensor3& pattern);

// Arbitrary real tensor to PNG by mapping [-max|x|, +max|x|] onto [0, 255].
// Used for filtered (non-binary) patterns.
std::vector<std::uint8_t> signed_tensor_to_png(const Tensor3& t);

// Image with entries in [0,255] (rounded, clipped) to RGB PNG.
std::vector<std::uint8_t> image_to_png(const Image& image);

// Any PNG libpng understands, converted to 3 x H x W doubles in [0, 255].
Image image_from_png(std::span<const std::uint8_t> bytes);
Image load_png(const std::filesystem::path& path);

}  // namespace turing

#endif  // TURING_PNG_IO_HPP
