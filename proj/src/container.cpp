#include "linr/container.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "linr/bytes.hpp"

namespace linr {

std::size_t ContainerHeader::frames_in_gop(std::size_t g) const {
  const std::size_t start = g * gop_size;
  if (start >= frame_count) return 0;
  return std::min<std::size_t>(gop_size, frame_count - start);
}

std::vector<std::uint8_t> serialize(const Container& c) {
  const auto& h = c.header;
  if (c.gops.size() != h.gop_count()) throw std::invalid_argument("GoP count disagrees with header");
  ByteWriter out;
  for (char ch : kContainerMagic) out.u8(static_cast<std::uint8_t>(ch));
  out.u8(h.version);
  out.u8(h.bit_depth);
  out.u8(h.scales);
  out.u16(h.gop_size);
  out.u32(h.frame_count);
  out.u8(h.bits);
  for (std::size_t g = 0; g < c.gops.size(); ++g) {
    const auto& gop = c.gops[g];
    if (gop.frames.size() != h.frames_in_gop(g)) {
      throw std::invalid_argument("frame count of GoP " + std::to_string(g) + " disagrees with header");
    }
    write_param_block(out, gop.params);
    for (const auto& f : gop.frames) {
      if (f.scales.size() != h.scales) throw std::invalid_argument("frame scale count disagrees with header");
      out.u32(static_cast<std::uint32_t>(f.base.size()));
      for (const auto& p : f.base) {
        out.u16(p.x);
        out.u16(p.y);
        out.u16(p.z);
      }
      for (const auto& scale : f.scales) {
        for (const auto& payload : scale) {
          out.u32(static_cast<std::uint32_t>(payload.size()));
          out.bytes(payload);
        }
      }
    }
  }
  return out.take();
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  Container c;
  for (char ch : kContainerMagic) {
    if (in.u8() != static_cast<std::uint8_t>(ch)) throw DecodeError("not a LNRP container (bad magic)");
  }
  auto& h = c.header;
  h.version = in.u8();
  if (h.version != kContainerVersion) {
    throw DecodeError("unsupported container version " + std::to_string(h.version));
  }
  h.bit_depth = in.u8();
  h.scales = in.u8();
  h.gop_size = in.u16();
  h.frame_count = in.u32();
  h.bits = in.u8();
  if (h.bit_depth < 1 || h.bit_depth > kMaxBitDepth) throw DecodeError("bad bit depth in header");
  if (h.gop_size < 1) throw DecodeError("GoP size of zero in header");
  if (h.bits < 1 || h.bits > 16) throw DecodeError("bad quantization bits in header");
  if (h.scales > h.bit_depth) throw DecodeError("more scales than bit depth allows");

  const std::uint32_t limit = 1u << h.bit_depth;
  for (std::size_t g = 0; g < h.gop_count(); ++g) {
    GopPayload gop;
    gop.params = read_param_block(in);
    for (std::size_t f = 0; f < h.frames_in_gop(g); ++f) {
      FramePayload frame;
      const std::uint32_t count = in.u32();
      if (count == 0) throw DecodeError("empty lowest-scale block");
      if (count > in.remaining() / 6) throw DecodeError("lowest-scale point count exceeds file size");
      frame.base.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        VoxelCoord p;
        p.x = in.u16();
        p.y = in.u16();
        p.z = in.u16();
        if (p.x >= limit || p.y >= limit || p.z >= limit) {
          throw DecodeError("lowest-scale coordinate exceeds bit depth");
        }
        if (!frame.base.empty() && !(frame.base.back() < p)) {
          throw DecodeError("lowest-scale coordinates not strictly increasing");
        }
        frame.base.push_back(p);
      }
      frame.scales.resize(h.scales);
      for (auto& scale : frame.scales) {
        for (auto& payload : scale) {
          const std::uint32_t len = in.u32();
          const auto data = in.bytes(len);
          payload.assign(data.begin(), data.end());
        }
      }
      gop.frames.push_back(std::move(frame));
    }
    c.gops.push_back(std::move(gop));
  }
  if (in.remaining() != 0) {
    throw DecodeError(std::to_string(in.remaining()) + " trailing bytes after last section");
  }
  return c;
}

std::size_t ByteAccounting::total() const {
  std::size_t t = header;
  t = std::accumulate(params.begin(), params.end(), t);
  t = std::accumulate(base.begin(), base.end(), t);
  for (const auto& f : occupancy) t = std::accumulate(f.begin(), f.end(), t);
  return t;
}

ByteAccounting account(const Container& c) {
  ByteAccounting acc;
  acc.header = kContainerHeaderBytes;
  for (const auto& gop : c.gops) {
    acc.params.push_back(gop.params.byte_size());
    for (const auto& f : gop.frames) {
      acc.base.push_back(4 + 6 * f.base.size());
      std::vector<std::size_t> per_scale(f.scales.size(), 0);
      for (std::size_t s = 0; s < f.scales.size(); ++s) {
        const std::size_t scale_index = f.scales.size() - 1 - s;
        for (const auto& payload : f.scales[s]) per_scale[scale_index] += 4 + payload.size();
      }
      acc.occupancy.push_back(std::move(per_scale));
    }
  }
  return acc;
}

}  // namespace linr
