#pragma once

// On-disk layout of a `.linr` file. All integers little-endian.
//
//   "LNRP" | version u8 | bit_depth u8 | N u8 | T u16 | frame_count u32 | B u8
//   per GoP:
//     parameter block (see param_codec.hpp)
//     per frame of the GoP:
//       point_count u32, point_count x (x u16, y u16, z u16)   lowest scale
//       per scale, coarse to fine, per stage 0..7:
//         payload_len u32, payload bytes
//
// A GoP holds T frames except the last, which holds the remainder.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "linr/model.hpp"
#include "linr/param_codec.hpp"
#include "linr/voxel.hpp"

namespace linr {

inline constexpr std::array<char, 4> kContainerMagic = {'L', 'N', 'R', 'P'};
inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderBytes = 4 + 1 + 1 + 1 + 2 + 4 + 1;

using StagePayloads = std::array<std::vector<std::uint8_t>, kStages>;

struct FramePayload {
  std::vector<VoxelCoord> base;  // lowest scale, sorted
  // scales[s] codes scale index N-1-s: coarsest transition first.
  std::vector<StagePayloads> scales;

  bool operator==(const FramePayload&) const = default;
};

struct GopPayload {
  ParamBlock params;
  std::vector<FramePayload> frames;

  bool operator==(const GopPayload&) const = default;
};

struct ContainerHeader {
  std::uint8_t version = kContainerVersion;
  std::uint8_t bit_depth = kDefaultBitDepth;
  std::uint8_t scales = 0;
  std::uint16_t gop_size = 32;
  std::uint32_t frame_count = 0;
  std::uint8_t bits = kDefaultQuantBits;

  std::size_t gop_count() const { return (frame_count + gop_size - 1u) / gop_size; }
  std::size_t frames_in_gop(std::size_t g) const;

  bool operator==(const ContainerHeader&) const = default;
};

struct Container {
  ContainerHeader header;
  std::vector<GopPayload> gops;

  bool operator==(const Container&) const = default;
};

std::vector<std::uint8_t> serialize(const Container& c);

/// Throws DecodeError on any structural problem, including trailing bytes.
Container parse_container(std::span<const std::uint8_t> bytes);

/// Byte count of every section; the parts add up to the serialized size.
struct ByteAccounting {
  std::size_t header = 0;
  std::vector<std::size_t> params;  // per GoP
  std::vector<std::size_t> base;    // per frame
  // [frame][scale index i] including length prefixes; i = 0 is the finest.
  std::vector<std::vector<std::size_t>> occupancy;

  std::size_t total() const;
};

ByteAccounting account(const Container& c);

}  // namespace linr
