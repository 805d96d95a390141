#ifndef TURING_DATASET_HPP
#define TURING_DATASET_HPP

#include <cstdint>
#include <vector>

#include "turing/conv_net.hpp"
#include "turing/core_tensors.hpp"

namespace turing::data {

// Seeded stand-in images: smooth colour fields with one random disc, box or
// stripe band, rounded to integer pixel values in [0, 255].
std::vector<Image> synthetic_images(Index count, const nn::Shape& shape, std::uint64_t seed);

}  // namespace turing::data

#endif  // TURING_DATASET_HPP
