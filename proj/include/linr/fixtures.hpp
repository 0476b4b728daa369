#pragma once

#include <cstdint>
#include <string_view>

#include "linr/voxel.hpp"

namespace linr {

enum class FixtureKind { Cube, SphereShell, Random, Plane };

/// Accepts "cube", "sphere-shell", "random" and "plane".
FixtureKind parse_fixture_kind(std::string_view s);

/// Solid size^3 block at the origin.
SparseVoxelSet cube_fixture(int size);

/// Voxels whose centre distance d to the sphere centre satisfies
/// r - 1/2 <= d < r + 1/2, centred at (r+1, r+1, r+1).
SparseVoxelSet sphere_shell_fixture(int radius);

/// n distinct points drawn uniformly from [0, 2^bit_depth)^3.
SparseVoxelSet random_fixture(std::size_t n, std::uint64_t seed, int bit_depth = kDefaultBitDepth);

/// Tilted size x size height field z = (x + 2y) / 4.
SparseVoxelSet plane_fixture(int size);

/// `size` is the edge length (cube, plane), radius (sphere-shell) or point
/// count (random).
SparseVoxelSet generate_fixture(FixtureKind kind, std::size_t size, std::uint64_t seed,
                                int bit_depth = kDefaultBitDepth);

}  // namespace linr
