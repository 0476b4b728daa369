#include "linr/range_coder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "linr/errors.hpp"

namespace linr {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
constexpr int kMaxTotalBits = 24;

void check_interval(std::uint32_t cum, std::uint32_t freq, int total_bits) {
  if (total_bits < 1 || total_bits > kMaxTotalBits) throw std::out_of_range("total_bits");
  const std::uint64_t total = std::uint64_t{1} << total_bits;
  if (freq == 0 || std::uint64_t{cum} + freq > total) throw std::out_of_range("symbol interval");
}
}  // namespace

BinaryProbability::BinaryProbability(std::uint32_t p1) : p1_(p1) {
  if (p1 < 1 || p1 >= kProbabilityOne) {
    throw std::out_of_range("binary probability " + std::to_string(p1) + " outside [1, 65535]");
  }
}

double BinaryProbability::cost(int bit) const {
  const double p = value();
  return bit ? -std::log2(p) : -std::log2(1.0 - p);
}

BinaryProbability quantize_probability(double p) {
  if (!std::isfinite(p)) throw NumericError("non-finite probability");
  const double scaled = std::round(p * kProbabilityOne);
  if (scaled < 1.0) return BinaryProbability(1);
  if (scaled > kProbabilityOne - 1.0) return BinaryProbability(kProbabilityOne - 1);
  return BinaryProbability(static_cast<std::uint32_t>(scaled));
}

// ---------------------------------------------------------------- encoder

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      const auto byte = static_cast<std::uint8_t>(temp + carry);
      // The first byte only ever receives bits above the initial 32-bit
      // window, which are zero.
      if (leading_) {
        leading_ = false;
      } else {
        out_.push_back(byte);
      }
      temp = 0xFF;
    } while (--pending_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++pending_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::normalize() {
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq, int total_bits) {
  if (finished_) throw std::logic_error("encoder already finished");
  check_interval(cum, freq, total_bits);
  const std::uint64_t lo = (std::uint64_t{range_} * cum) >> total_bits;
  const std::uint64_t hi = (std::uint64_t{range_} * (std::uint64_t{cum} + freq)) >> total_bits;
  low_ += lo;
  range_ = static_cast<std::uint32_t>(hi - lo);
  normalize();
}

void RangeEncoder::encode_bit(BinaryProbability p, int bit) {
  // 1 occupies [0, p1), 0 occupies [p1, 2^16).
  if (bit) {
    encode(0, p.p1(), kProbabilityBits);
  } else {
    encode(p.p1(), kProbabilityOne - p.p1(), kProbabilityBits);
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw std::logic_error("encoder already finished");
  finished_ = true;
  // Pick the value in [low, low + range) with the most trailing zero bytes:
  // a multiple of 2^32 when one fits, otherwise a multiple of 2^24, which
  // always fits because range >= 2^24.
  const std::uint64_t up32 = (low_ + 0xFFFFFFFFull) & ~0xFFFFFFFFull;
  if (up32 < low_ + range_) {
    low_ = up32;
  } else {
    low_ = (low_ + 0xFFFFFFull) & ~0xFFFFFFull;
  }
  shift_low();
  shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

// ---------------------------------------------------------------- decoder

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> stream) : stream_(stream) {
  for (int i = 0; i < 4; ++i) {
    const auto b = next_byte();
    code_ = (code_ << 8) | b;
    window_ = (window_ << 8) | b;
  }
  if (code_ >= range_) throw DecodeError("range stream starts outside the coding interval");
}

std::uint8_t RangeDecoder::next_byte() {
  const std::uint8_t b = pos_ < stream_.size() ? stream_[pos_] : 0;
  ++pos_;
  return b;
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    const auto b = next_byte();
    code_ = (code_ << 8) | b;
    window_ = (window_ << 8) | b;
    range_ <<= 8;
  }
}

int RangeDecoder::decode_bit(BinaryProbability p) {
  const auto bound = static_cast<std::uint32_t>((std::uint64_t{range_} * p.p1()) >> kProbabilityBits);
  int bit;
  if (code_ < bound) {
    range_ = bound;
    bit = 1;
  } else {
    code_ -= bound;
    range_ -= bound;
    bit = 0;
  }
  normalize();
  return bit;
}

std::uint32_t RangeDecoder::peek(int total_bits) const {
  if (total_bits < 1 || total_bits > kMaxTotalBits) throw std::out_of_range("total_bits");
  const std::uint64_t scaled = ((std::uint64_t{code_} + 1) << total_bits) - 1;
  return static_cast<std::uint32_t>(scaled / range_);
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq, int total_bits) {
  check_interval(cum, freq, total_bits);
  const std::uint64_t lo = (std::uint64_t{range_} * cum) >> total_bits;
  const std::uint64_t hi = (std::uint64_t{range_} * (std::uint64_t{cum} + freq)) >> total_bits;
  if (code_ < lo || code_ >= hi) throw DecodeError("symbol interval does not contain the code value");
  code_ -= static_cast<std::uint32_t>(lo);
  range_ = static_cast<std::uint32_t>(hi - lo);
  normalize();
}

void RangeDecoder::finish() const {
  if (stream_.size() > pos_) throw DecodeError("trailing bytes after range stream");
  if (!stream_.empty() && stream_.back() == 0) throw DecodeError("non-canonical range stream tail");
  const std::uint32_t low = window_ - code_;
  std::uint32_t expected;
  if (low == 0 || 0u - low < range_) {
    expected = 0;
  } else {
    expected = (low + 0xFFFFFFu) & 0xFF000000u;
  }
  if (window_ != expected) throw DecodeError("non-canonical range stream flush");
}

}  // namespace linr
