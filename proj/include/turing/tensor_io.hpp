#ifndef TURING_TENSOR_IO_HPP
#define TURING_TENSOR_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "turing/core_tensors.hpp"

namespace turing {

// TPAT layout (all integers little-endian):
//   "TPAT" | u32 version = 1 | u32 C | u32 H | u32 W | C*H*W float32 LE
// Values are channel-major, then row-major within a channel.
inline constexpr std::uint32_t kTpatVersion = 1;
inline constexpr std::size_t kTpatHeaderBytes = 20;
// Refuse headers describing more than this many values (1 GiB of payload).
inline constexpr std::uint64_t kTpatMaxValues = std::uint64_t{1} << 28;

std::vector<std::uint8_t> encode_tpat(const Tensor3& t);
Tensor3 decode_tpat(std::span<const std::uint8_t> bytes);

void save_tensor(const Tensor3& t, const std::filesystem::path& path);
Tensor3 load_tensor(const std::filesystem::path& path);

// Raw float32 little-endian payload without header; the wire/caching format.
void append_f32le(const Tensor3& t, std::vector<std::uint8_t>& out);
std::vector<std::uint8_t> to_f32le(const Tensor3& t);

// Round every entry through float32, i.e. what the disk/wire formats keep.
Tensor3 quantize_f32(const Tensor3& t);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace turing

#endif  // TURING_TENSOR_IO_HPP
