#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "levyshell/rng.hpp"

using namespace levyshell;

TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, FirstBlockIsPhiloxOfStreamCounter) {
  const std::uint64_t seed = 0x0123456789abcdefULL, id = 0xfedcba9876543210ULL;
  RngStream rng(seed, id);
  const auto block = philox4x32({0, 0, static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)},
                                {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  for (int i = 0; i < 4; ++i) EXPECT_EQ(rng.next_u32(), block[static_cast<std::size_t>(i)]);
}

TEST(RngStream, ReproducibleAndStreamsDiffer) {
  RngStream a(5, 1), b(5, 1), c(5, 2), d(6, 1);
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    if (i == 0) firsts = {x, c.next_u64(), d.next_u64()};
  }
  EXPECT_EQ(firsts.size(), 3u);
}

TEST(RngStream, UniformStaysInOpenIntervalWithRightMean) {
  RngStream rng(11, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
}

TEST(RngStream, ExponentialAndNormalMoments) {
  RngStream rng(12, 0);
  const int n = 200000;
  double se = 0.0, sn = 0.0, sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    se += rng.exponential();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(se / n, 1.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sn / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(StreamIds, PurposeOccupiesTopBits) {
  EXPECT_EQ(derive_stream_id(stream_purpose::trajectory, 17), 17u);
  EXPECT_EQ(derive_stream_id(stream_purpose::bel, 0), 1ULL << 48);
  EXPECT_EQ(derive_stream_id(stream_purpose::sampler_check, 3), (9ULL << 48) ^ 3ULL);
  EXPECT_NE(derive_stream_id(stream_purpose::ergodicity_a, 5), derive_stream_id(stream_purpose::ergodicity_b, 5));
}
