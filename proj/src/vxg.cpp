#include "triplane/vxg.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "triplane/error.hpp"

namespace triplane {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_vxg(const VxgVolume& v) {
  if (v.values.size() != v.numel()) {
    throw IoError("vxg: " + std::to_string(v.values.size()) + " values for a volume of " +
                  std::to_string(v.numel()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(kVxgHeaderBytes + 4 * v.values.size());
  for (char c : {'V', 'X', 'G', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 1);
  put_u32(out, v.channels);
  for (std::uint32_t d : v.dims) put_u32(out, d);
  for (float f : v.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

VxgVolume decode_vxg(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kVxgHeaderBytes || std::memcmp(bytes.data(), "VXG1", 4) != 0) {
    throw IoError("vxg: missing VXG1 header");
  }
  const std::uint8_t* p = bytes.data();
  if (const std::uint32_t version = get_u32(p + 4); version != 1) {
    throw IoError("vxg: unsupported version " + std::to_string(version));
  }
  VxgVolume v;
  v.channels = get_u32(p + 8);
  for (int k = 0; k < 3; ++k) v.dims[k] = get_u32(p + 12 + 4 * k);
  const std::uint64_t n = std::uint64_t(v.channels) * v.dims[0] * v.dims[1] * v.dims[2];
  if (bytes.size() != kVxgHeaderBytes + 4 * n) {
    throw IoError("vxg: file length " + std::to_string(bytes.size()) + " does not match header (" +
                  std::to_string(kVxgHeaderBytes + 4 * n) + " expected)");
  }
  v.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    v.values[i] = std::bit_cast<float>(get_u32(p + kVxgHeaderBytes + 4 * i));
  }
  return v;
}

void write_vxg(const std::string& path, const VxgVolume& v) {
  const auto bytes = encode_vxg(v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

VxgVolume read_vxg(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_vxg(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace triplane
