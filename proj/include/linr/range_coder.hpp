#pragma once

// Byte-oriented range coder with 32-bit range, carry propagation and
// canonical minimal flush.
//
// Subinterval bounds are computed with a full 64-bit product
// floor(range * cum / 2^bits), so the only rounding loss is one unit of the
// 32-bit range per symbol. The encoder emits the shortest byte string whose
// zero-padded value lies in the final interval and drops trailing zero
// bytes. The decoder reads zeros past the end and, in finish(), checks that
// the stream is exactly the canonical encoding of what was decoded, so any
// altered byte either changes the decoded symbols or raises DecodeError.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace linr {

inline constexpr int kProbabilityBits = 16;
inline constexpr std::uint32_t kProbabilityOne = 1u << kProbabilityBits;

/// Probability of a 1 bit in units of 2^-16, always in [1, 65535].
class BinaryProbability {
 public:
  /// Throws std::out_of_range unless 1 <= p1 <= 65535.
  explicit BinaryProbability(std::uint32_t p1);

  std::uint32_t p1() const { return p1_; }
  double value() const { return static_cast<double>(p1_) / kProbabilityOne; }
  /// Ideal cost of coding `bit` at this probability, in bits.
  double cost(int bit) const;

  bool operator==(const BinaryProbability&) const = default;

 private:
  std::uint32_t p1_;
};

/// clamp(round(p * 65536), 1, 65535). Throws NumericError on non-finite p.
BinaryProbability quantize_probability(double p);

class RangeEncoder {
 public:
  RangeEncoder() = default;

  void encode_bit(BinaryProbability p, int bit);
  /// Codes the interval [cum, cum + freq) of a table summing to 2^total_bits.
  void encode(std::uint32_t cum, std::uint32_t freq, int total_bits);

  /// Flushes and returns the stream. The encoder is spent afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();
  void normalize();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  bool leading_ = true;
  bool finished_ = false;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  /// Throws DecodeError if the stream cannot start a valid decode.
  explicit RangeDecoder(std::span<const std::uint8_t> stream);

  int decode_bit(BinaryProbability p);

  /// Returns f such that the coded symbol's interval [cum, cum+freq)
  /// contains f; follow with consume().
  std::uint32_t peek(int total_bits) const;
  void consume(std::uint32_t cum, std::uint32_t freq, int total_bits);

  /// Verifies that every byte was consumed and that the stream is the
  /// canonical encoding of the decoded symbols. Throws DecodeError.
  void finish() const;

  std::size_t stream_size() const { return stream_.size(); }

 private:
  std::uint8_t next_byte();
  void normalize();

  std::span<const std::uint8_t> stream_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t window_ = 0;
};

}  // namespace linr
