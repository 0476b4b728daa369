#pragma once

// Adaptive quantization of the decoder parameters and their Laplace-model
// compression.
//
// One header covers the whole flattened parameter vector:
//   q = round((p - min) / (max - min) * (2^B - 1))     (half away from zero)
//   p' = q / (2^B - 1) * (max - min) + min
// The quantized integers are range coded under a discretized Laplace fitted
// by their sample mean and mean absolute deviation. When the flat b = +inf
// member of the family codes shorter (near-uniform symbols) the block
// stores b = +inf instead.

#include <cstdint>
#include <span>
#include <vector>

#include "linr/bytes.hpp"
#include "linr/model.hpp"

namespace linr {

inline constexpr int kDefaultQuantBits = 8;

struct QuantHeader {
  float min = 0.0f;
  float max = 1.0f;
  int bits = kDefaultQuantBits;
  std::uint32_t count = 0;

  std::uint32_t levels() const { return (1u << bits) - 1u; }
  bool operator==(const QuantHeader&) const = default;
};

struct LaplaceSideInfo {
  float mu = 0.0f;
  float b = 0.0f;
  bool operator==(const LaplaceSideInfo&) const = default;
};

struct QuantizedParams {
  QuantHeader header;
  std::vector<std::uint32_t> symbols;
};

/// Throws NumericError on NaN/Inf and std::invalid_argument on an empty
/// vector or B outside [1, 16]. A constant vector yields max = min + 1 and
/// all-zero symbols.
QuantizedParams quantize(std::span<const float> params, int bits = kDefaultQuantBits);

/// Exact grid values in double precision. Throws DecodeError for a symbol
/// above 2^B - 1.
std::vector<double> dequantize(const QuantHeader& header, std::span<const std::uint32_t> symbols);

/// Sample mean and mean absolute deviation of the symbols, rounded to f32.
LaplaceSideInfo fit_laplace(std::span<const std::uint32_t> symbols);

std::vector<std::uint8_t> compress_params(std::span<const std::uint32_t> symbols,
                                          const QuantHeader& header, const LaplaceSideInfo& side);

/// Throws DecodeError on a truncated or corrupt payload.
std::vector<std::uint32_t> decompress_params(std::span<const std::uint8_t> payload,
                                             const QuantHeader& header,
                                             const LaplaceSideInfo& side);

/// Loads dequantize(header, symbols) into the model in canonical order.
/// Throws CountMismatch if the count differs from the model's.
template <typename T>
void reload_dequantized(LinrModel<T>& model, const QuantHeader& header,
                        std::span<const std::uint32_t> symbols);

/// Serialized parameter block:
///   min f32, max f32, mu f32, b f32, B u8, count u32, payload_len u32, payload.
struct ParamBlock {
  QuantHeader header;
  LaplaceSideInfo side;
  std::vector<std::uint8_t> payload;

  std::size_t byte_size() const { return 4 * 4 + 1 + 4 + 4 + payload.size(); }
  bool operator==(const ParamBlock&) const = default;
};

/// Quantizes, fits and compresses a parameter vector. An empty vector
/// gives an empty block (count 0).
ParamBlock encode_param_block(std::span<const float> params, int bits);

/// Inverse of encode_param_block, returning the dequantized values as f32.
std::vector<float> decode_param_block(const ParamBlock& block);

void write_param_block(ByteWriter& out, const ParamBlock& block);
ParamBlock read_param_block(ByteReader& in);

}  // namespace linr
