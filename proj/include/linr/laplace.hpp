#pragma once

#include <cstdint>
#include <vector>

#include "linr/range_coder.hpp"

namespace linr {

/// Cumulative frequency table over symbols 0..2^B-1 from a Laplace(mu, b)
/// density integrated over unit bins [s - 0.5, s + 0.5], renormalized to
/// the domain and scaled to 2^total_bits with every symbol getting at least
/// one count. total_bits is 16 for B <= 12 and B + 4 above.
class LaplaceTable {
 public:
  /// b <= 0 puts all free mass on round(mu); b = +inf is the uniform limit.
  /// Throws std::invalid_argument for B outside [1, 16], non-finite mu or
  /// NaN / -inf b.
  LaplaceTable(double mu, double b, int symbol_bits);

  int symbol_bits() const { return symbol_bits_; }
  int total_bits() const { return total_bits_; }
  std::uint32_t symbols() const { return static_cast<std::uint32_t>(cum_.size() - 1); }
  std::uint32_t cum(std::uint32_t s) const { return cum_[s]; }
  std::uint32_t freq(std::uint32_t s) const { return cum_[s + 1] - cum_[s]; }
  /// -log2(freq / total).
  double ideal_bits(std::uint32_t s) const;

 private:
  int symbol_bits_;
  int total_bits_;
  std::vector<std::uint32_t> cum_;
};

void encode_symbol(RangeEncoder& enc, const LaplaceTable& table, std::uint32_t s);
std::uint32_t decode_symbol(RangeDecoder& dec, const LaplaceTable& table);

}  // namespace linr
