#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace elmap {

using MortonCode = std::uint64_t;

// Largest coordinate encodable in a 64-bit Morton code (21 bits per axis).
inline constexpr std::uint32_t kMaxMortonCoord = (1u << 21) - 1;

/// Key of an octree entity: the Morton code of its minimum voxel corner plus
/// the tree level it lives at (0 = root). Keys at equal level sort in Z-order,
/// which coincides with the pre-order traversal of the tree.
struct MortonKey {
  MortonCode code = 0;
  int level = 0;

  friend bool operator==(const MortonKey&, const MortonKey&) = default;
  friend auto operator<=>(const MortonKey&, const MortonKey&) = default;
};

namespace detail {

// Spreads the low 21 bits of v so that bit i lands on bit 3i.
constexpr std::uint64_t spread3(std::uint64_t v)
{
  v &= 0x1fffff;
  v = (v | (v << 32)) & 0x1f00000000ffff;
  v = (v | (v << 16)) & 0x1f0000ff0000ff;
  v = (v | (v << 8)) & 0x100f00f00f00f00f;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3;
  v = (v | (v << 2)) & 0x1249249249249249;
  return v;
}

// Inverse of spread3: gathers every third bit back into the low 21 bits.
constexpr std::uint64_t compact3(std::uint64_t v)
{
  v &= 0x1249249249249249;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00f;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ff;
  v = (v ^ (v >> 16)) & 0x1f00000000ffff;
  v = (v ^ (v >> 32)) & 0x1fffff;
  return v;
}

} // namespace detail

/// Interleaves voxel coordinates into a Morton code. Bit i of x occupies code
/// bit 3i, y bit 3i+1 and z bit 3i+2.
constexpr MortonCode morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z)
{
  return detail::spread3(x) | (detail::spread3(y) << 1) | (detail::spread3(z) << 2);
}

inline MortonCode morton_encode(const Eigen::Vector3i& coord)
{
  if ((coord.array() < 0).any() || (coord.array() > static_cast<int>(kMaxMortonCoord)).any()) {
    throw std::out_of_range("morton_encode: coordinate out of range");
  }
  return morton_encode(static_cast<std::uint32_t>(coord.x()),
                       static_cast<std::uint32_t>(coord.y()),
                       static_cast<std::uint32_t>(coord.z()));
}

constexpr void morton_decode(MortonCode code, std::uint32_t& x, std::uint32_t& y, std::uint32_t& z)
{
  x = static_cast<std::uint32_t>(detail::compact3(code));
  y = static_cast<std::uint32_t>(detail::compact3(code >> 1));
  z = static_cast<std::uint32_t>(detail::compact3(code >> 2));
}

inline Eigen::Vector3i morton_decode(MortonCode code)
{
  std::uint32_t x, y, z;
  morton_decode(code, x, y, z);
  return {static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)};
}

} // namespace elmap
