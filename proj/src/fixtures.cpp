#include "linr/fixtures.hpp"

#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "linr/errors.hpp"

namespace linr {

namespace {

void check_extent(long extent, int bit_depth = kMaxBitDepth) {
  if (extent < 1 || extent > (1L << bit_depth)) {
    throw std::invalid_argument("fixture extent " + std::to_string(extent) + " outside the bit depth");
  }
}

VoxelCoord at(long x, long y, long z) {
  return {static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), static_cast<std::uint16_t>(z)};
}

}  // namespace

FixtureKind parse_fixture_kind(std::string_view s) {
  if (s == "cube") return FixtureKind::Cube;
  if (s == "sphere-shell") return FixtureKind::SphereShell;
  if (s == "random") return FixtureKind::Random;
  if (s == "plane") return FixtureKind::Plane;
  throw std::invalid_argument("unknown fixture kind '" + std::string(s) + "'");
}

SparseVoxelSet cube_fixture(int size) {
  check_extent(size);
  std::vector<VoxelCoord> pts;
  pts.reserve(static_cast<std::size_t>(size) * size * size);
  for (long x = 0; x < size; ++x)
    for (long y = 0; y < size; ++y)
      for (long z = 0; z < size; ++z) pts.push_back(at(x, y, z));
  return SparseVoxelSet::from_sorted(std::move(pts));
}

SparseVoxelSet sphere_shell_fixture(int radius) {
  check_extent(2L * radius + 3);
  const long c = radius + 1;
  const long lo = (2L * radius - 1) * (2L * radius - 1);
  const long hi = (2L * radius + 1) * (2L * radius + 1);
  std::vector<VoxelCoord> pts;
  for (long x = 0; x <= 2 * c; ++x)
    for (long y = 0; y <= 2 * c; ++y)
      for (long z = 0; z <= 2 * c; ++z) {
        // Integer test of (2r-1)^2 <= (2d)^2 < (2r+1)^2.
        const long d4 = 4 * ((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c));
        if (d4 >= lo && d4 < hi) pts.push_back(at(x, y, z));
      }
  return SparseVoxelSet::from_sorted(std::move(pts));
}

SparseVoxelSet random_fixture(std::size_t n, std::uint64_t seed, int bit_depth) {
  if (bit_depth < 1 || bit_depth > kMaxBitDepth) throw std::invalid_argument("bit depth outside [1, 16]");
  if (bit_depth < 21 && n > (std::size_t{1} << (3 * bit_depth))) {
    throw std::invalid_argument("more random points than voxels");
  }
  std::mt19937_64 rng(seed);
  const int shift = 64 - bit_depth;
  std::set<VoxelCoord> pts;
  while (pts.size() < n) {
    const auto x = rng() >> shift;
    const auto y = rng() >> shift;
    const auto z = rng() >> shift;
    pts.insert(at(static_cast<long>(x), static_cast<long>(y), static_cast<long>(z)));
  }
  return SparseVoxelSet::from_sorted({pts.begin(), pts.end()});
}

SparseVoxelSet plane_fixture(int size) {
  check_extent(size);
  std::vector<VoxelCoord> pts;
  for (long x = 0; x < size; ++x)
    for (long y = 0; y < size; ++y) pts.push_back(at(x, y, (x + 2 * y) / 4));
  return SparseVoxelSet(std::move(pts));
}

SparseVoxelSet generate_fixture(FixtureKind kind, std::size_t size, std::uint64_t seed, int bit_depth) {
  SparseVoxelSet out;
  switch (kind) {
    case FixtureKind::Cube: out = cube_fixture(static_cast<int>(size)); break;
    case FixtureKind::SphereShell: out = sphere_shell_fixture(static_cast<int>(size)); break;
    case FixtureKind::Random: return random_fixture(size, seed, bit_depth);
    case FixtureKind::Plane: out = plane_fixture(static_cast<int>(size)); break;
  }
  if (out.required_bit_depth() > bit_depth) {
    throw DepthError("fixture needs " + std::to_string(out.required_bit_depth()) + " bits");
  }
  return out;
}

}  // namespace linr
