#include "linr/param_codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "linr/laplace.hpp"
#include "linr/range_coder.hpp"

namespace linr {

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("quantization bits outside [1, 16]");
}

}  // namespace

QuantizedParams quantize(std::span<const float> params, int bits) {
  check_bits(bits);
  if (params.empty()) throw std::invalid_argument("cannot quantize an empty parameter vector");
  float lo = params[0], hi = params[0];
  for (float p : params) {
    if (!std::isfinite(p)) throw NumericError("non-finite parameter value");
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  QuantizedParams out;
  out.header.bits = bits;
  out.header.count = static_cast<std::uint32_t>(params.size());
  out.header.min = lo;
  out.symbols.assign(params.size(), 0);
  if (hi == lo) {
    out.header.max = lo + 1.0f;
    return out;
  }
  out.header.max = hi;
  const double levels = out.header.levels();
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double t = (static_cast<double>(params[i]) - static_cast<double>(lo)) / span * levels;
    out.symbols[i] = static_cast<std::uint32_t>(std::clamp(std::round(t), 0.0, levels));
  }
  return out;
}

std::vector<double> dequantize(const QuantHeader& header, std::span<const std::uint32_t> symbols) {
  check_bits(header.bits);
  const std::uint32_t levels = header.levels();
  const double span = static_cast<double>(header.max) - static_cast<double>(header.min);
  std::vector<double> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] > levels) {
      throw DecodeError("quantized symbol " + std::to_string(symbols[i]) + " exceeds 2^B - 1");
    }
    out[i] = static_cast<double>(symbols[i]) / static_cast<double>(levels) * span +
             static_cast<double>(header.min);
  }
  return out;
}

LaplaceSideInfo fit_laplace(std::span<const std::uint32_t> symbols) {
  if (symbols.empty()) throw std::invalid_argument("cannot fit an empty symbol vector");
  double sum = 0.0;
  for (auto s : symbols) sum += static_cast<double>(s);
  const double mu = sum / static_cast<double>(symbols.size());
  double dev = 0.0;
  for (auto s : symbols) dev += std::abs(static_cast<double>(s) - mu);
  return {static_cast<float>(mu), static_cast<float>(dev / static_cast<double>(symbols.size()))};
}

std::vector<std::uint8_t> compress_params(std::span<const std::uint32_t> symbols,
                                          const QuantHeader& header, const LaplaceSideInfo& side) {
  const LaplaceTable table(side.mu, side.b, header.bits);
  RangeEncoder enc;
  for (auto s : symbols) encode_symbol(enc, table, s);
  return enc.finish();
}

std::vector<std::uint32_t> decompress_params(std::span<const std::uint8_t> payload,
                                             const QuantHeader& header,
                                             const LaplaceSideInfo& side) {
  try {
    const LaplaceTable table(side.mu, side.b, header.bits);
    RangeDecoder dec(payload);
    std::vector<std::uint32_t> out(header.count);
    for (auto& s : out) s = decode_symbol(dec, table);
    dec.finish();
    return out;
  } catch (const std::invalid_argument& e) {
    throw DecodeError(std::string("bad parameter side info: ") + e.what());
  }
}

template <typename T>
void reload_dequantized(LinrModel<T>& model, const QuantHeader& header,
                        std::span<const std::uint32_t> symbols) {
  if (symbols.size() != model.parameter_count() || header.count != symbols.size()) {
    throw CountMismatch("parameter block holds " + std::to_string(symbols.size()) +
                        " values, model has " + std::to_string(model.parameter_count()));
  }
  const auto values = dequantize(header, symbols);
  std::vector<T> cast(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) cast[i] = static_cast<T>(values[i]);
  model.unflatten(cast);
}

template void reload_dequantized(LinrModel<float>&, const QuantHeader&, std::span<const std::uint32_t>);
template void reload_dequantized(LinrModel<double>&, const QuantHeader&, std::span<const std::uint32_t>);

ParamBlock encode_param_block(std::span<const float> params, int bits) {
  check_bits(bits);
  ParamBlock block;
  block.header.bits = bits;
  if (params.empty()) {
    block.header.count = 0;
    return block;
  }
  auto q = quantize(params, bits);
  block.header = q.header;
  block.side = fit_laplace(q.symbols);
  block.payload = compress_params(q.symbols, block.header, block.side);
  // Near-uniform symbols code worse under the fitted scale than under the
  // flat limit; keep whichever is shorter.
  const LaplaceSideInfo flat{block.side.mu, INFINITY};
  auto alt = compress_params(q.symbols, block.header, flat);
  if (alt.size() < block.payload.size()) {
    block.side = flat;
    block.payload = std::move(alt);
  }
  return block;
}

std::vector<float> decode_param_block(const ParamBlock& block) {
  if (block.header.count == 0) {
    if (!block.payload.empty()) throw DecodeError("empty parameter block carries a payload");
    return {};
  }
  const auto symbols = decompress_params(block.payload, block.header, block.side);
  const auto values = dequantize(block.header, symbols);
  return {values.begin(), values.end()};
}

void write_param_block(ByteWriter& out, const ParamBlock& block) {
  out.f32(block.header.min);
  out.f32(block.header.max);
  out.f32(block.side.mu);
  out.f32(block.side.b);
  out.u8(static_cast<std::uint8_t>(block.header.bits));
  out.u32(block.header.count);
  out.u32(static_cast<std::uint32_t>(block.payload.size()));
  out.bytes(block.payload);
}

ParamBlock read_param_block(ByteReader& in) {
  ParamBlock block;
  block.header.min = in.f32();
  block.header.max = in.f32();
  block.side.mu = in.f32();
  block.side.b = in.f32();
  block.header.bits = in.u8();
  block.header.count = in.u32();
  const std::uint32_t len = in.u32();
  if (block.header.bits < 1 || block.header.bits > 16) throw DecodeError("parameter block: bad B");
  if (!std::isfinite(block.header.min) || !std::isfinite(block.header.max) ||
      !std::isfinite(block.side.mu) || std::isnan(block.side.b) || block.side.b < 0.0f) {
    throw DecodeError("parameter block: non-finite header");
  }
  const auto payload = in.bytes(len);
  block.payload.assign(payload.begin(), payload.end());
  return block;
}

}  // namespace linr
