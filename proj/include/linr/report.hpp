#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "linr/codec.hpp"

namespace linr {

/// Encode report as a JSON document.
std::string report_json(const EncodeReport& report, const GopConfig& cfg);

struct SectionShare {
  std::string name;
  std::size_t bytes = 0;
  double fraction = 0.0;
};

/// File sections in stream order (header, decoder parameters, lowest
/// scale, then occupancy per scale from coarse to fine). Byte counts come
/// straight from the container layout and add up to the file size.
std::vector<SectionShare> section_shares(const Container& c);

/// Per-parent coding cost seen by the decoder: the bits of the eight child
/// slots of one voxel, priced at the quantized probabilities.
struct PointCost {
  std::size_t frame = 0;
  int scale = 0;
  VoxelCoord parent;
  double bits = 0.0;
};

struct StatsResult {
  std::vector<SectionShare> sections;
  std::size_t total_bytes = 0;
  std::size_t points = 0;
  double decode_seconds = 0.0;
  std::vector<PointCost> costs;  // filled when requested
};

/// Decodes the container once, timing it. Throws on a corrupt stream.
StatsResult compute_stats(const Container& c, bool per_point_costs);

void print_stats(std::ostream& out, const StatsResult& stats, const Container& c,
                 const std::optional<std::string>& encode_report_json);
void write_costs_csv(std::ostream& out, const std::vector<PointCost>& costs);

}  // namespace linr
