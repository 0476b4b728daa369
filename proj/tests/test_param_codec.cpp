#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "linr/codec.hpp"
#include "linr/errors.hpp"
#include "linr/fixtures.hpp"
#include "linr/param_codec.hpp"

using namespace linr;

namespace {

// Discretized Laplace samples around mu, clipped to the alphabet.
std::vector<std::uint32_t> laplace_symbols(std::size_t n, double mu, double b, int B, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0 / b);
  std::bernoulli_distribution sign(0.5);
  const double top = std::ldexp(1.0, B) - 1;
  std::vector<std::uint32_t> out(n);
  for (auto& s : out) {
    const double x = mu + (sign(rng) ? e(rng) : -e(rng));
    s = static_cast<std::uint32_t>(std::clamp(std::round(x), 0.0, top));
  }
  return out;
}

double empirical_entropy_bits(const std::vector<std::uint32_t>& q) {
  std::map<std::uint32_t, double> hist;
  for (auto s : q) hist[s] += 1;
  double h = 0;
  for (auto& [s, c] : hist) h -= c * std::log2(c / static_cast<double>(q.size()));
  return h;
}

}  // namespace

TEST_CASE("quantize examples") {
  const std::vector<float> p = {-1.0f, 0.0f, 1.0f};
  const auto q = quantize(p, 8);
  CHECK(q.header.min == -1.0f);
  CHECK(q.header.max == 1.0f);
  CHECK(q.header.bits == 8);
  CHECK(q.header.count == 3);
  CHECK(q.symbols == std::vector<std::uint32_t>{0, 128, 255});

  QuantHeader h{-1.0f, 1.0f, 8, 1};
  const std::vector<std::uint32_t> mid = {128};
  CHECK(dequantize(h, mid)[0] == doctest::Approx(128.0 / 255.0 * 2 - 1).epsilon(1e-15));
  CHECK(dequantize(h, mid)[0] == doctest::Approx(0.003922).epsilon(1e-4));
  const std::vector<std::uint32_t> ends = {0, 255};
  CHECK(dequantize(h, ends) == std::vector<double>{-1.0, 1.0});
  const std::vector<std::uint32_t> over = {256};
  CHECK_THROWS_AS(dequantize(h, over), DecodeError);
}

TEST_CASE("endpoints map to 0 and 2^B - 1") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-3.0f, 5.0f);
  for (int B = 1; B <= 16; ++B) {
    std::vector<float> p(50);
    for (auto& x : p) x = u(rng);
    const auto q = quantize(p, B);
    const auto lo = std::min_element(p.begin(), p.end()) - p.begin();
    const auto hi = std::max_element(p.begin(), p.end()) - p.begin();
    CHECK(q.symbols[static_cast<std::size_t>(lo)] == 0);
    CHECK(q.symbols[static_cast<std::size_t>(hi)] == q.header.levels());
    const auto d = dequantize(q.header, q.symbols);
    CHECK(d[static_cast<std::size_t>(lo)] == static_cast<double>(q.header.min));
    CHECK(d[static_cast<std::size_t>(hi)] == static_cast<double>(q.header.max));
  }
}

TEST_CASE("half-way values round away from zero") {
  // (0.5 - 0) / 1 * 1 = 0.5 -> 1 with B = 1.
  const std::vector<float> p = {0.0f, 0.5f, 1.0f};
  CHECK(quantize(p, 1).symbols == std::vector<std::uint32_t>{0, 1, 1});
  const std::vector<float> p2 = {0.0f, 1.5f, 3.0f};  // 1.5/3 * 3 = 1.5 -> 2 with B = 2
  CHECK(quantize(p2, 2).symbols == std::vector<std::uint32_t>{0, 2, 3});
}

TEST_CASE("constant vector uses the unit range") {
  const std::vector<float> p = {0.75f, 0.75f, 0.75f};
  const auto q = quantize(p, 8);
  CHECK(q.symbols == std::vector<std::uint32_t>{0, 0, 0});
  CHECK(q.header.min == 0.75f);
  CHECK(q.header.max == 1.75f);
  for (double d : dequantize(q.header, q.symbols)) CHECK(d == 0.75);
  const auto side = fit_laplace(q.symbols);
  CHECK(side.b == 0.0f);
  const auto block = encode_param_block(p, 8);
  CHECK(decode_param_block(block) == p);
}

TEST_CASE("quantize input errors") {
  CHECK_THROWS_AS(quantize(std::vector<float>{1.0f, NAN}, 8), NumericError);
  CHECK_THROWS_AS(quantize(std::vector<float>{INFINITY}, 8), NumericError);
  CHECK_THROWS_AS(quantize(std::vector<float>{}, 8), std::invalid_argument);
  CHECK_THROWS_AS(quantize(std::vector<float>{1.0f}, 0), std::invalid_argument);
  CHECK_THROWS_AS(quantize(std::vector<float>{1.0f}, 17), std::invalid_argument);
}

TEST_CASE("dequantization error is at most half a step") {
  // Checked as |q * span - L * (p - min)| <= span / 2, which is exact in
  // double for f32 inputs. Float inputs can sit exactly on a midpoint, where
  // the rounded dequantized value is half a step off up to one ulp.
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 0.2f);
  for (int B : {2, 4, 8, 12, 16}) {
    bool exact_ok = true;
    double worst_ratio = 0.0;
    for (int v = 0; v < (B == 8 ? 100000 : 2000); ++v) {
      std::vector<float> p(8);
      for (auto& x : p) x = n(rng);
      const auto q = quantize(p, B);
      const auto d = dequantize(q.header, q.symbols);
      const double span = static_cast<double>(q.header.max) - static_cast<double>(q.header.min);
      const double L = q.header.levels();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double lhs = std::abs(q.symbols[i] * span - L * (static_cast<double>(p[i]) - q.header.min));
        exact_ok &= lhs <= span / 2;
        worst_ratio = std::max(worst_ratio, std::abs(d[i] - static_cast<double>(p[i])) / (span / (2 * L)));
      }
    }
    CAPTURE(B);
    CHECK(exact_ok);
    CHECK(worst_ratio <= 1.0 + 1e-12);
  }
}

TEST_CASE("fit_laplace examples") {
  const std::vector<std::uint32_t> q = {0, 128, 255};
  const auto s = fit_laplace(q);
  CHECK(s.mu == doctest::Approx(127.667).epsilon(1e-5));
  CHECK(s.b == doctest::Approx(85.111).epsilon(1e-5));
  CHECK(s.mu == static_cast<float>(383.0 / 3.0));
  CHECK(fit_laplace(std::vector<std::uint32_t>{9, 9, 9, 9}).b == 0.0f);
  const auto sym = fit_laplace(std::vector<std::uint32_t>{0, 200});
  CHECK(sym.mu == 100.0f);
  CHECK(sym.b == 100.0f);
  CHECK_THROWS_AS(fit_laplace(std::vector<std::uint32_t>{}), std::invalid_argument);
}

TEST_CASE("compress and decompress are inverse") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int B = 1 + static_cast<int>(rng() % 16);
    std::vector<std::uint32_t> q(1 + rng() % 3000);
    for (auto& s : q) s = static_cast<std::uint32_t>(rng() % (1u << B));
    const QuantHeader h{0.0f, 1.0f, B, static_cast<std::uint32_t>(q.size())};
    const auto side = fit_laplace(q);
    const auto bytes = compress_params(q, h, side);
    CHECK(decompress_params(bytes, h, side) == q);
  }
}

TEST_CASE("Laplace-shaped symbols compress below 0.8 of raw") {
  std::mt19937_64 rng(21);
  const auto q = laplace_symbols(20000, 127.0, 8.0, 8, rng);
  const QuantHeader h{0.0f, 1.0f, 8, static_cast<std::uint32_t>(q.size())};
  const auto side = fit_laplace(q);
  const auto bytes = compress_params(q, h, side);
  const double raw = static_cast<double>(q.size());
  CHECK(static_cast<double>(bytes.size()) <= 0.8 * raw);
  // And the coder is close to the data's own entropy.
  CHECK(8.0 * static_cast<double>(bytes.size()) <= 1.05 * empirical_entropy_bits(q) + 32);
  CHECK(decompress_params(bytes, h, side) == q);
}

TEST_CASE("uniform symbols stay within 2% of raw plus the header") {
  std::mt19937_64 rng(22);
  std::vector<float> p(20000);
  for (auto& x : p) x = static_cast<float>(rng() % 256);
  const auto block = encode_param_block(p, 8);
  const double raw = static_cast<double>(p.size());
  const double header = 4 * 4 + 1 + 4 + 4;
  CHECK(static_cast<double>(block.byte_size()) <= 1.02 * raw + header);
  CHECK(std::isinf(block.side.b));
  CHECK(decode_param_block(block) == p);

  // The fitted scale alone would overshoot by about 3%.
  const auto q = quantize(p, 8);
  const auto fitted = compress_params(q.symbols, q.header, fit_laplace(q.symbols));
  CHECK(static_cast<double>(fitted.size()) > 1.02 * raw);

  ByteWriter w;
  write_param_block(w, block);
  const auto bytes = w.take();
  ByteReader r(bytes);
  CHECK(read_param_block(r) == block);
}

TEST_CASE("truncated or padded payloads are rejected") {
  std::mt19937_64 rng(3);
  const auto q = laplace_symbols(2000, 100.0, 6.0, 8, rng);
  const QuantHeader h{0.0f, 1.0f, 8, static_cast<std::uint32_t>(q.size())};
  const auto side = fit_laplace(q);
  const auto bytes = compress_params(q, h, side);
  for (std::size_t cut : {std::size_t{0}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    bool silent = false;
    try {
      silent = decompress_params(t, h, side) == q;
    } catch (const DecodeError&) {
    }
    CHECK(!silent);
  }
  auto longer = bytes;
  longer.push_back(0x5A);
  CHECK_THROWS_AS(decompress_params(longer, h, side), DecodeError);
}

TEST_CASE("parameter block serialization") {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 0.1f);
  std::vector<float> p(5000);
  for (auto& x : p) x = n(rng);
  const auto block = encode_param_block(p, 8);
  ByteWriter w;
  write_param_block(w, block);
  CHECK(w.size() == block.byte_size());
  const auto bytes = w.take();
  ByteReader r(bytes);
  CHECK(read_param_block(r) == block);
  CHECK(r.remaining() == 0);
  for (std::size_t cut = 0; cut < 25; ++cut) {
    ByteReader rt(std::span<const std::uint8_t>(bytes.data(), cut));
    CHECK_THROWS_AS(read_param_block(rt), DecodeError);
  }

  const auto empty = encode_param_block(std::vector<float>{}, 8);
  CHECK(empty.header.count == 0);
  CHECK(empty.payload.empty());
  CHECK(decode_param_block(empty).empty());
}

TEST_CASE("reload is idempotent and checks the count") {
  LinrModel<float> m(ModelConfig{.scales = 2}, 3);
  const auto q = quantize(m.flatten(), 8);
  reload_dequantized(m, q.header, q.symbols);
  const auto d = dequantize(q.header, q.symbols);
  const auto v = m.flatten();
  for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(v[i] == static_cast<float>(d[i]));
  const auto again = quantize(m.flatten(), 8);
  CHECK(again.symbols == q.symbols);
  CHECK(again.header == q.header);

  std::vector<std::uint32_t> shorter(q.symbols.begin(), q.symbols.end() - 1);
  CHECK_THROWS_AS(reload_dequantized(m, q.header, shorter), CountMismatch);

  // decode_param_block gives the same values as the reload path.
  const auto block = encode_param_block(v, 8);
  CHECK(decode_param_block(block) == m.flatten());
}

TEST_CASE("regularizer-trained parameters compress below the raw dump") {
  const auto frame = random_fixture(400, 2, 8);
  GopConfig cfg;
  cfg.gop_size = 1;
  cfg.epochs_first = 6;
  cfg.steps_per_frame = 8;
  cfg.bit_depth = 8;
  const auto res = encode_sequence(std::vector<SparseVoxelSet>{frame}, cfg);
  const auto& block = res.container.gops[0].params;
  CHECK(block.payload.size() < block.header.count);
}

TEST_CASE("B = 16 changes the rate of a trained toy model") {
  const auto frame = random_fixture(300, 5, 7);
  GopConfig cfg;
  cfg.gop_size = 1;
  cfg.epochs_first = 2;
  cfg.steps_per_frame = 6;
  cfg.bit_depth = 7;
  const std::vector<SparseVoxelSet> seq{frame};
  const auto r8 = encode_sequence(seq, cfg);
  cfg.bits = 16;
  const auto r16 = encode_sequence(seq, cfg);
  CHECK(r8.report.frame_bpp(0) != r16.report.frame_bpp(0));
  CHECK(r16.report.bytes.params[0] > r8.report.bytes.params[0]);
  CHECK(verify(r8.container, seq).ok);
  CHECK(verify(r16.container, seq).ok);
}
