#include "linr/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "linr/errors.hpp"

namespace linr {

namespace {

double laplace_cdf(double x, double mu, double b) {
  if (x < mu) return 0.5 * std::exp((x - mu) / b);
  return 1.0 - 0.5 * std::exp(-(x - mu) / b);
}

}  // namespace

LaplaceTable::LaplaceTable(double mu, double b, int symbol_bits)
    : symbol_bits_(symbol_bits), total_bits_(symbol_bits <= 12 ? 16 : symbol_bits + 4) {
  if (symbol_bits < 1 || symbol_bits > 16) throw std::invalid_argument("symbol bits outside [1, 16]");
  if (!std::isfinite(mu) || std::isnan(b) || b == -INFINITY) {
    throw std::invalid_argument("non-finite Laplace side info");
  }

  const std::uint32_t n = 1u << symbol_bits;
  const std::uint64_t total = std::uint64_t{1} << total_bits_;
  const std::uint64_t spare = total - n;

  std::vector<double> mass(n, 0.0);
  if (std::isinf(b)) {
    std::fill(mass.begin(), mass.end(), 1.0);
  } else if (b > 0.0) {
    for (std::uint32_t s = 0; s < n; ++s) {
      const double x = static_cast<double>(s);
      mass[s] = laplace_cdf(x + 0.5, mu, b) - laplace_cdf(x - 0.5, mu, b);
    }
  }
  double sum = 0.0;
  for (double m : mass) sum += m;
  if (!(sum > 0.0)) {
    // Degenerate scale (or all mass outside the domain): a point mass on the
    // nearest symbol.
    std::fill(mass.begin(), mass.end(), 0.0);
    const double centre = std::clamp(std::round(mu), 0.0, static_cast<double>(n - 1));
    mass[static_cast<std::uint32_t>(centre)] = 1.0;
    sum = 1.0;
  }

  std::vector<std::uint64_t> freq(n);
  std::uint64_t used = 0;
  std::uint32_t mode = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    const auto extra =
        static_cast<std::uint64_t>(std::floor(mass[s] / sum * static_cast<double>(spare)));
    freq[s] = 1 + std::min(extra, spare);
    used += freq[s];
    if (mass[s] > mass[mode]) mode = s;
  }
  if (used > total) throw std::logic_error("Laplace table overflow");
  freq[mode] += total - used;

  cum_.resize(n + 1);
  cum_[0] = 0;
  for (std::uint32_t s = 0; s < n; ++s) cum_[s + 1] = static_cast<std::uint32_t>(cum_[s] + freq[s]);
}

double LaplaceTable::ideal_bits(std::uint32_t s) const {
  return static_cast<double>(total_bits_) - std::log2(static_cast<double>(freq(s)));
}

void encode_symbol(RangeEncoder& enc, const LaplaceTable& table, std::uint32_t s) {
  if (s >= table.symbols()) throw std::out_of_range("symbol outside the table alphabet");
  enc.encode(table.cum(s), table.freq(s), table.total_bits());
}

std::uint32_t decode_symbol(RangeDecoder& dec, const LaplaceTable& table) {
  const std::uint32_t f = dec.peek(table.total_bits());
  // Largest s with cum(s) <= f.
  std::uint32_t lo = 0, hi = table.symbols();
  while (hi - lo > 1) {
    const std::uint32_t mid = lo + (hi - lo) / 2;
    if (table.cum(mid) <= f) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  dec.consume(table.cum(lo), table.freq(lo), table.total_bits());
  return lo;
}

}  // namespace linr
