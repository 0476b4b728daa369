#include "linr/voxel.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "linr/errors.hpp"

namespace linr {

std::uint16_t VoxelCoord::max_component() const { return std::max({x, y, z}); }

SparseVoxelSet::SparseVoxelSet(std::vector<VoxelCoord> coords, std::size_t* duplicates)
    : coords_(std::move(coords)) {
  std::sort(coords_.begin(), coords_.end());
  const auto before = coords_.size();
  coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
  if (duplicates) *duplicates = before - coords_.size();
}

SparseVoxelSet SparseVoxelSet::from_sorted(std::vector<VoxelCoord> coords) {
  for (std::size_t i = 1; i < coords.size(); ++i) {
    if (!(coords[i - 1] < coords[i])) {
      throw PyramidMismatch("coordinates are not strictly increasing at index " +
                            std::to_string(i));
    }
  }
  SparseVoxelSet out;
  out.coords_ = std::move(coords);
  return out;
}

std::optional<std::size_t> SparseVoxelSet::find(const VoxelCoord& c) const {
  auto it = std::lower_bound(coords_.begin(), coords_.end(), c);
  if (it == coords_.end() || *it != c) return std::nullopt;
  return static_cast<std::size_t>(it - coords_.begin());
}

std::optional<std::size_t> SparseVoxelSet::find(int x, int y, int z) const {
  constexpr int kLimit = 1 << kMaxBitDepth;
  if (x < 0 || y < 0 || z < 0 || x >= kLimit || y >= kLimit || z >= kLimit) return std::nullopt;
  return find(VoxelCoord{std::uint16_t(x), std::uint16_t(y), std::uint16_t(z)});
}

int SparseVoxelSet::required_bit_depth() const {
  std::uint16_t m = 0;
  bool any = false;
  for (const auto& c : coords_) {
    m = std::max(m, c.max_component());
    any = true;
  }
  if (!any) return 0;
  return std::max(1, static_cast<int>(std::bit_width(static_cast<unsigned>(m))));
}

void SparseVoxelSet::set_features(std::vector<float> feats, int channels) {
  if (channels < 0 || feats.size() != coords_.size() * static_cast<std::size_t>(channels)) {
    throw ShapeError("feature matrix does not match coordinate count");
  }
  feats_ = std::move(feats);
  feat_channels_ = channels;
}

std::size_t ChildOccupancy::total_children() const {
  std::size_t n = 0;
  for (auto m : masks) n += static_cast<std::size_t>(std::popcount(m));
  return n;
}

SparseVoxelSet downsample(const SparseVoxelSet& pc) {
  if (pc.empty()) throw EmptyCloud("cannot downsample an empty cloud");
  std::vector<VoxelCoord> halved;
  halved.reserve(pc.size());
  for (const auto& c : pc.coords()) halved.push_back(c.parent());
  SparseVoxelSet out(std::move(halved));
  out.set_unit_features();
  return out;
}

ScalePyramid build_pyramid(const SparseVoxelSet& pc, std::size_t stop_at,
                           std::optional<int> fixed_scales) {
  if (pc.empty()) throw EmptyCloud("cannot build a pyramid from an empty cloud");
  if (stop_at < 1) throw std::invalid_argument("stop_at must be at least 1");
  if (fixed_scales && *fixed_scales < 0) throw std::invalid_argument("negative scale count");

  ScalePyramid pyr;
  pyr.levels.push_back(pc);
  if (pyr.levels.front().feature_channels() == 0) pyr.levels.front().set_unit_features();

  auto more = [&] {
    if (fixed_scales) return pyr.scales() < *fixed_scales;
    return pyr.levels.back().size() > stop_at;
  };
  while (more()) {
    const SparseVoxelSet& fine = pyr.levels.back();
    SparseVoxelSet coarse = downsample(fine);
    std::vector<std::uint32_t> parents(fine.size());
    for (std::size_t i = 0; i < fine.size(); ++i) {
      parents[i] = static_cast<std::uint32_t>(*coarse.find(fine[i].parent()));
    }
    pyr.parent_maps.push_back(std::move(parents));
    pyr.levels.push_back(std::move(coarse));
  }
  return pyr;
}

ChildOccupancy child_occupancy(const SparseVoxelSet& fine, const SparseVoxelSet& coarse) {
  ChildOccupancy occ;
  occ.masks.assign(coarse.size(), 0);
  for (const auto& p : fine.coords()) {
    auto q = coarse.find(p.parent());
    if (!q) throw PyramidMismatch("fine point has no parent in the coarse level");
    occ.masks[*q] |= static_cast<std::uint8_t>(1u << p.child_slot());
  }
  for (auto m : occ.masks) {
    if (m == 0) throw PyramidMismatch("coarse point has no children in the fine level");
  }
  return occ;
}

SparseVoxelSet reconstruct_children(const ChildOccupancy& occ, const SparseVoxelSet& coarse) {
  if (occ.masks.size() != coarse.size()) {
    throw PyramidMismatch("occupancy mask count differs from coarse point count");
  }
  std::vector<VoxelCoord> children;
  children.reserve(occ.total_children());
  for (std::size_t q = 0; q < coarse.size(); ++q) {
    const auto mask = occ.masks[q];
    if (mask == 0) throw InvalidOccupancy("all-zero child mask at parent " + std::to_string(q));
    for (int j = 0; j < 8; ++j) {
      if (mask & (1u << j)) children.push_back(coarse[q].child(j));
    }
  }
  std::sort(children.begin(), children.end());
  auto out = SparseVoxelSet::from_sorted(std::move(children));
  out.set_unit_features();
  return out;
}

std::vector<std::uint8_t> neighbor_occupancy(const SparseVoxelSet& pc) {
  std::vector<std::uint8_t> out(pc.size() * kNeighborChannels, 0);
  for (std::size_t p = 0; p < pc.size(); ++p) {
    const auto& c = pc[p];
    for (int ch = 0; ch < kNeighborChannels; ++ch) {
      const auto& o = kNeighborOffsets[ch];
      if (ch == kNeighborChannels - 1 || pc.find(c.x + o[0], c.y + o[1], c.z + o[2])) {
        out[p * kNeighborChannels + ch] = 1;
      }
    }
  }
  return out;
}

NeighborTable::NeighborTable(const SparseVoxelSet& pc)
    : rows_(pc.size()), index_(pc.size() * kKernelVolume, -1) {
  for (std::size_t p = 0; p < rows_; ++p) {
    const auto& c = pc[p];
    for (int k = 0; k < kKernelVolume; ++k) {
      if (k == kKernelCenter) {
        index_[p * kKernelVolume + k] = static_cast<std::int32_t>(p);
        continue;
      }
      const auto o = kernel_offset(k);
      if (auto q = pc.find(c.x + o[0], c.y + o[1], c.z + o[2])) {
        index_[p * kKernelVolume + k] = static_cast<std::int32_t>(*q);
      }
    }
  }
}

}  // namespace linr
