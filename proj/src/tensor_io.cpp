#include "turing/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace turing {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= std::uint32_t{bytes[offset + k]} << (8 * k);
  return v;
}

std::uint32_t checked_dim(Index d, const char* what) {
  if (d < 0 || static_cast<std::uint64_t>(d) > 0xFFFFFFFFULL) {
    throw TensorIoError(TensorIoErrc::DimensionOverflow, std::string(what) + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(d);
}

}  // namespace

void append_f32le(const Tensor3& t, std::vector<std::uint8_t>& out) {
  out.reserve(out.size() + 4 * static_cast<std::size_t>(t.size()));
  for (Index k = 0; k < t.size(); ++k) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.flat()[k])));
  }
}

std::vector<std::uint8_t> to_f32le(const Tensor3& t) {
  std::vector<std::uint8_t> out;
  append_f32le(t, out);
  return out;
}

Tensor3 quantize_f32(const Tensor3& t) {
  Tensor3 q = t;
  q.flat() = t.flat().cast<float>().cast<double>();
  return q;
}

std::vector<std::uint8_t> encode_tpat(const Tensor3& t) {
  std::vector<std::uint8_t> out{'T', 'P', 'A', 'T'};
  put_u32(out, kTpatVersion);
  put_u32(out, checked_dim(t.channels(), "channels"));
  put_u32(out, checked_dim(t.height(), "height"));
  put_u32(out, checked_dim(t.width(), "width"));
  append_f32le(t, out);
  return out;
}

Tensor3 decode_tpat(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "TPAT", 4) != 0) {
    throw TensorIoError(TensorIoErrc::BadMagic, "expected \"TPAT\"");
  }
  if (bytes.size() < kTpatHeaderBytes) {
    throw TensorIoError(TensorIoErrc::Truncated, "header shorter than 20 bytes");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kTpatVersion) {
    throw TensorIoError(TensorIoErrc::UnsupportedVersion, "version " + std::to_string(version));
  }
  const std::uint64_t c = get_u32(bytes, 8);
  const std::uint64_t h = get_u32(bytes, 12);
  const std::uint64_t w = get_u32(bytes, 16);
  // c*h*w can reach 2^96; check factor by factor against the cap.
  const bool overflow = (h != 0 && w > kTpatMaxValues / h) ||
                        (h * w != 0 && c > kTpatMaxValues / (h * w));
  if (overflow) {
    throw TensorIoError(TensorIoErrc::DimensionOverflow,
                        std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::uint64_t n = c * h * w;
  const std::uint64_t payload = bytes.size() - kTpatHeaderBytes;
  if (payload < 4 * n) {
    throw TensorIoError(TensorIoErrc::Truncated, "header declares " + std::to_string(n) +
                                                     " values, payload holds " +
                                                     std::to_string(payload / 4));
  }
  if (payload > 4 * n) {
    throw TensorIoError(TensorIoErrc::TrailingBytes, std::to_string(payload - 4 * n) + " extra bytes");
  }
  Tensor3 t(static_cast<Index>(c), static_cast<Index>(h), static_cast<Index>(w));
  for (std::uint64_t k = 0; k < n; ++k) {
    t.flat()[static_cast<Index>(k)] =
        std::bit_cast<float>(get_u32(bytes, kTpatHeaderBytes + 4 * k));
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorIoError(TensorIoErrc::OpenFailed, path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorIoError(TensorIoErrc::OpenFailed, path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorIoError(TensorIoErrc::WriteFailed, path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_tensor(const Tensor3& t, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tpat(t));
}

Tensor3 load_tensor(const std::filesystem::path& path) {
  return decode_tpat(read_file_bytes(path));
}

}  // namespace turing
