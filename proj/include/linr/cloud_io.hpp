#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linr/voxel.hpp"

namespace linr {

enum class CloudFormat { AsciiPly, BinaryPly, Xyz };

std::string to_string(CloudFormat f);
/// Accepts "ply" (ascii), "ply-binary" and "xyz".
CloudFormat parse_cloud_format(std::string_view s);

struct ReadOptions {
  int bit_depth = kDefaultBitDepth;
  // Grid size for floor(c / grid) voxelization. Without it every
  // coordinate must already be an integer.
  std::optional<double> voxelize;
};

struct LoadReport {
  CloudFormat format = CloudFormat::AsciiPly;
  std::size_t vertices = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
};

struct LoadedCloud {
  SparseVoxelSet cloud;
  LoadReport report;
};

/// Parses PLY (ascii or binary little-endian, x/y/z of any scalar type)
/// or whitespace-separated xyz text. Throws ParseError with a line or byte
/// position, DepthError for coordinates outside [0, 2^bit_depth) and
/// IoError when the file cannot be read.
LoadedCloud read_cloud(const std::filesystem::path& path, const ReadOptions& opt = {});
LoadedCloud parse_cloud(std::span<const std::uint8_t> bytes, CloudFormat hint, const ReadOptions& opt = {});

/// Serialized file contents; coordinates are written as int properties.
std::vector<std::uint8_t> render_cloud(const SparseVoxelSet& pc, CloudFormat format);

/// Writes through a temporary file and a rename, so a failed write never
/// leaves a partial file behind. Throws IoError.
void write_cloud(const SparseVoxelSet& pc, const std::filesystem::path& path, CloudFormat format);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Format implied by the file extension (.ply, .xyz, .txt); PLY files are
/// sniffed for ascii vs binary when parsed.
std::optional<CloudFormat> format_from_extension(const std::filesystem::path& path);

/// A directory yields its cloud files in lexicographic order, a file
/// yields itself.
std::vector<std::filesystem::path> list_sequence(const std::filesystem::path& input);

}  // namespace linr
