#pragma once

// VXG1 volume files: "VXG1", five little-endian u32 (version = 1, C, Dx, Dy,
// Dz), then C*Dx*Dy*Dz little-endian float32 values in (C, x, y, z)
// row-major order.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace triplane {

struct VxgVolume {
  std::uint32_t channels = 0;
  std::array<std::uint32_t, 3> dims{};
  std::vector<float> values;

  std::size_t numel() const {
    return std::size_t(channels) * dims[0] * dims[1] * dims[2];
  }
  bool operator==(const VxgVolume&) const = default;
};

inline constexpr std::size_t kVxgHeaderBytes = 24;

std::vector<std::uint8_t> encode_vxg(const VxgVolume& v);
/// Throws IoError on a bad magic, version or length.
VxgVolume decode_vxg(const std::vector<std::uint8_t>& bytes);

void write_vxg(const std::string& path, const VxgVolume& v);
VxgVolume read_vxg(const std::string& path);

}  // namespace triplane
