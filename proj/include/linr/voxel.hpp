#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace linr {

inline constexpr int kMaxBitDepth = 16;
inline constexpr int kDefaultBitDepth = 10;
inline constexpr std::size_t kDefaultStopAt = 64;

struct VoxelCoord {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint16_t z = 0;

  auto operator<=>(const VoxelCoord&) const = default;

  VoxelCoord parent() const {
    return {std::uint16_t(x >> 1), std::uint16_t(y >> 1), std::uint16_t(z >> 1)};
  }

  // Child slot of this voxel inside its parent cell: 4*dx + 2*dy + dz.
  int child_slot() const { return ((x & 1) << 2) | ((y & 1) << 1) | (z & 1); }

  VoxelCoord child(int slot) const {
    return {std::uint16_t((x << 1) | ((slot >> 2) & 1)),
            std::uint16_t((y << 1) | ((slot >> 1) & 1)),
            std::uint16_t((z << 1) | (slot & 1))};
  }

  std::uint16_t max_component() const;
};

/// Sorted, deduplicated set of occupied voxels at one scale.
///
/// Coordinates are strictly increasing in (x, y, z) order. An optional
/// feature matrix (row-major, one row per coordinate) rides along; the
/// full-resolution initialization is a single all-ones channel.
class SparseVoxelSet {
 public:
  SparseVoxelSet() = default;

  /// Sorts and deduplicates `coords`; the number of dropped duplicates is
  /// written to `duplicates` when given.
  explicit SparseVoxelSet(std::vector<VoxelCoord> coords,
                          std::size_t* duplicates = nullptr);

  /// Takes `coords` as-is; throws PyramidMismatch if they are not strictly
  /// increasing.
  static SparseVoxelSet from_sorted(std::vector<VoxelCoord> coords);

  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }
  const std::vector<VoxelCoord>& coords() const { return coords_; }
  const VoxelCoord& operator[](std::size_t i) const { return coords_[i]; }

  std::optional<std::size_t> find(const VoxelCoord& c) const;
  std::optional<std::size_t> find(int x, int y, int z) const;
  bool contains(const VoxelCoord& c) const { return find(c).has_value(); }

  /// Smallest bit depth that holds every coordinate (0 for an empty set).
  int required_bit_depth() const;

  int feature_channels() const { return feat_channels_; }
  const std::vector<float>& features() const { return feats_; }
  void set_features(std::vector<float> feats, int channels);
  void set_unit_features() { set_features(std::vector<float>(size(), 1.0f), 1); }

  bool operator==(const SparseVoxelSet& o) const { return coords_ == o.coords_; }

 private:
  std::vector<VoxelCoord> coords_;
  std::vector<float> feats_;
  int feat_channels_ = 0;
};

/// Octree child masks of a coarse level: bit j of masks[q] is set iff the
/// child in slot j of coarse point q is occupied at the finer level.
struct ChildOccupancy {
  std::vector<std::uint8_t> masks;

  std::size_t total_children() const;
  bool operator==(const ChildOccupancy&) const = default;
};

/// Chain of levels from full resolution (index 0) down to the coarsest
/// (index N), with the parent of every point of level i in level i+1.
struct ScalePyramid {
  std::vector<SparseVoxelSet> levels;
  std::vector<std::vector<std::uint32_t>> parent_maps;

  /// Number of scale transitions N (levels.size() - 1).
  int scales() const { return static_cast<int>(levels.size()) - 1; }
  const SparseVoxelSet& coarsest() const { return levels.back(); }
};

/// Componentwise floor division by two, deduplicated. Output features are
/// all-ones. Throws EmptyCloud on an empty input.
SparseVoxelSet downsample(const SparseVoxelSet& pc);

/// Downsamples until the coarsest level holds at most `stop_at` points, or
/// exactly `fixed_scales` times when that is given.
ScalePyramid build_pyramid(const SparseVoxelSet& pc, std::size_t stop_at = kDefaultStopAt,
                           std::optional<int> fixed_scales = std::nullopt);

ChildOccupancy child_occupancy(const SparseVoxelSet& fine, const SparseVoxelSet& coarse);

SparseVoxelSet reconstruct_children(const ChildOccupancy& occ, const SparseVoxelSet& coarse);

inline constexpr int kNeighborChannels = 7;

/// Face-neighbor offsets in channel order; the last entry is the voxel itself.
inline constexpr std::array<std::array<int, 3>, kNeighborChannels> kNeighborOffsets = {{
    {+1, 0, 0}, {-1, 0, 0}, {0, +1, 0}, {0, -1, 0}, {0, 0, +1}, {0, 0, -1}, {0, 0, 0}}};

/// Seven binary occupancy channels per point, row-major (size() x 7).
std::vector<std::uint8_t> neighbor_occupancy(const SparseVoxelSet& pc);

inline constexpr int kKernelVolume = 27;
inline constexpr int kKernelCenter = 13;

/// Offset of kernel tap k, enumerated lexicographically over (-1..1)^3.
constexpr std::array<int, 3> kernel_offset(int k) { return {k / 9 - 1, (k / 3) % 3 - 1, k % 3 - 1}; }

/// For each point and each of the 27 kernel taps, the row index of the
/// occupied neighbor at that offset, or -1.
class NeighborTable {
 public:
  NeighborTable() = default;
  explicit NeighborTable(const SparseVoxelSet& pc);

  std::size_t rows() const { return rows_; }
  std::span<const std::int32_t> row(std::size_t p) const {
    return {index_.data() + p * kKernelVolume, kKernelVolume};
  }
  std::int32_t at(std::size_t p, int k) const { return index_[p * kKernelVolume + k]; }

 private:
  std::size_t rows_ = 0;
  std::vector<std::int32_t> index_;
};

}  // namespace linr
