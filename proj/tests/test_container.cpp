#include <random>
#include <set>

#include "doctest.h"
#include "linr/container.hpp"
#include "linr/errors.hpp"

using namespace linr;

namespace {

Container random_container(std::mt19937_64& rng, std::uint32_t frames, std::uint16_t T, std::uint8_t N) {
  Container c;
  c.header.bit_depth = 9;
  c.header.scales = N;
  c.header.gop_size = T;
  c.header.frame_count = frames;
  c.header.bits = 8;
  for (std::size_t g = 0; g < c.header.gop_count(); ++g) {
    GopPayload gop;
    std::vector<float> p(40);
    for (auto& x : p) x = static_cast<float>(static_cast<int>(rng() % 200) - 100) / 64.0f;
    gop.params = encode_param_block(p, 8);
    for (std::size_t f = 0; f < c.header.frames_in_gop(g); ++f) {
      FramePayload fp;
      std::set<VoxelCoord> base;
      const std::size_t n = 1 + rng() % 6;
      const int lim = 1 << (9 - N);
      while (base.size() < n) {
        base.insert({std::uint16_t(rng() % lim), std::uint16_t(rng() % lim), std::uint16_t(rng() % lim)});
      }
      fp.base.assign(base.begin(), base.end());
      for (int s = 0; s < N; ++s) {
        StagePayloads st;
        for (auto& b : st) {
          b.resize(rng() % 5);
          for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        }
        fp.scales.push_back(st);
      }
      gop.frames.push_back(std::move(fp));
    }
    c.gops.push_back(std::move(gop));
  }
  return c;
}

}  // namespace

TEST_CASE("gop layout") {
  ContainerHeader h;
  h.gop_size = 32;
  h.frame_count = 96;
  CHECK(h.gop_count() == 3);
  CHECK(h.frames_in_gop(2) == 32);
  h.frame_count = 5;
  CHECK(h.gop_count() == 1);
  CHECK(h.frames_in_gop(0) == 5);
  h.frame_count = 70;
  CHECK(h.gop_count() == 3);
  CHECK(h.frames_in_gop(2) == 6);
}

TEST_CASE("hand-built byte layout") {
  Container c;
  c.header.bit_depth = 4;
  c.header.scales = 1;
  c.header.gop_size = 2;
  c.header.frame_count = 1;
  c.header.bits = 8;
  GopPayload g;
  g.params = encode_param_block(std::vector<float>{}, 8);
  FramePayload f;
  f.base = {{1, 2, 3}};
  StagePayloads st;
  st[3] = {0xAB};
  f.scales.push_back(st);
  g.frames.push_back(f);
  c.gops.push_back(g);
  std::vector<std::uint8_t> expect = {'L', 'N', 'R', 'P', 1, 4, 1, 2, 0, 1, 0, 0, 0, 8};
  // Empty parameter block: min 0, max 1.0f, mu 0, b 0, B 8, count 0, len 0.
  for (std::uint8_t b : {0, 0, 0, 0, 0, 0, 0x80, 0x3F, 0, 0, 0, 0, 0, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 0}) expect.push_back(b);
  for (std::uint8_t b : {1, 0, 0, 0, 1, 0, 2, 0, 3, 0}) expect.push_back(b);
  for (int s = 0; s < 8; ++s) {
    if (s == 3) {
      for (std::uint8_t b : {1, 0, 0, 0, 0xAB}) expect.push_back(b);
    } else {
      for (int k = 0; k < 4; ++k) expect.push_back(0);
    }
  }
  CHECK(serialize(c) == expect);
  CHECK(parse_container(expect) == c);
  const auto acc = account(c);
  CHECK(acc.header == kContainerHeaderBytes);
  CHECK(acc.params[0] == 25);
  CHECK(acc.base[0] == 10);
  CHECK(acc.occupancy[0][0] == 33);
  CHECK(acc.total() == expect.size());
}

TEST_CASE("parse(serialize(c)) == c and accounting matches the size") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto frames = static_cast<std::uint32_t>(1 + rng() % 9);
    const auto T = static_cast<std::uint16_t>(1 + rng() % 4);
    const auto N = static_cast<std::uint8_t>(rng() % 4);
    const auto c = random_container(rng, frames, T, N);
    const auto bytes = serialize(c);
    CHECK(parse_container(bytes) == c);
    const auto acc = account(c);
    CHECK(acc.total() == bytes.size());
    CHECK(acc.params.size() == c.gops.size());
    CHECK(acc.base.size() == frames);
  }
}

TEST_CASE("structural errors") {
  std::mt19937_64 rng(4);
  const auto c = random_container(rng, 3, 2, 2);
  const auto bytes = serialize(c);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_container(bad), DecodeError);
  bad = bytes;
  bad[4] = 2;  // version
  CHECK_THROWS_AS(parse_container(bad), DecodeError);
  bad = bytes;
  bad[5] = 0;  // bit depth
  CHECK_THROWS_AS(parse_container(bad), DecodeError);
  bad = bytes;
  bad[6] = 10;  // N > bit depth
  CHECK_THROWS_AS(parse_container(bad), DecodeError);
  bad = bytes;
  bad[7] = bad[8] = 0;  // T = 0
  CHECK_THROWS_AS(parse_container(bad), DecodeError);
  bad = bytes;
  bad[13] = 0;  // B = 0
  CHECK_THROWS_AS(parse_container(bad), DecodeError);

  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(parse_container(bad), DecodeError);

  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    CHECK_THROWS_AS(parse_container(std::span<const std::uint8_t>(bytes.data(), cut)), DecodeError);
  }
}

TEST_CASE("base coordinates are validated") {
  Container c;
  c.header.bit_depth = 3;
  c.header.scales = 0;
  c.header.gop_size = 1;
  c.header.frame_count = 1;
  GopPayload g;
  g.params = encode_param_block(std::vector<float>{}, 8);
  FramePayload f;
  f.base = {{1, 1, 1}, {7, 7, 7}};
  g.frames.push_back(f);
  c.gops.push_back(g);
  const auto ok = serialize(c);
  CHECK(parse_container(ok) == c);

  c.gops[0].frames[0].base = {{7, 7, 7}, {1, 1, 1}};
  CHECK_THROWS_AS(parse_container(serialize(c)), DecodeError);
  c.gops[0].frames[0].base = {{1, 1, 1}, {1, 1, 1}};
  CHECK_THROWS_AS(parse_container(serialize(c)), DecodeError);
  c.gops[0].frames[0].base = {{1, 1, 1}, {8, 0, 0}};
  CHECK_THROWS_AS(parse_container(serialize(c)), DecodeError);
}

TEST_CASE("inconsistent containers do not serialize") {
  std::mt19937_64 rng(5);
  auto c = random_container(rng, 4, 2, 1);
  c.gops.pop_back();
  CHECK_THROWS_AS(serialize(c), std::invalid_argument);
  c = random_container(rng, 4, 2, 1);
  c.gops[0].frames[0].scales.pop_back();
  CHECK_THROWS_AS(serialize(c), std::invalid_argument);
}
