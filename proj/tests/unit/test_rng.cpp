#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>

#include "mvsa/core/rng.hpp"

namespace mvsa {
namespace {

// Produced by an independent Python transcription of the generator
// (splitmix64 finalizer over key + i * golden-ratio increment).
constexpr std::array<std::uint64_t, 64> kGoldenSeed42 = {
    0x8CA10B1DBE91EE23ULL, 0xE72AAC3121269F60ULL, 0xEB61EF540335612CULL, 0xFB03207F3FD6A416ULL,
    0x53A48B182A716A63ULL, 0xE11C53C114E43F15ULL, 0x4B9CFDE2BF6021A5ULL, 0x30264F0B6A70ECF2ULL,
    0xCB3FA8739D5B0A06ULL, 0xB5E6559CBCFCF494ULL, 0x17E1B4CEEF54661FULL, 0xC5638B7DA37DD307ULL,
    0x5974FBBC98E8AF75ULL, 0x0C5A33F6E57184D9ULL, 0x255A3537573DC042ULL, 0x05576F90CAB3EB10ULL,
    0x432A43EEC69A0F14ULL, 0x4627D122CDA88605ULL, 0x3576BD11805AA95AULL, 0xEE66246B4C2C2871ULL,
    0xDC6C4A92F0E206F5ULL, 0xEBB59A7DDBB5605EULL, 0x451D7BE4E8324847ULL, 0xCEAF7F7AEFBD64EEULL,
    0xDBA487E8552F8703ULL, 0x011BC0A67DC16B24ULL, 0xF239F8F746C93C89ULL, 0xE0974CC29A43F73AULL,
    0x715A711B56AE9928ULL, 0x67487E5AF6CF0DA2ULL, 0xE36649ED13C2228CULL, 0x2AF3A3620A0E9899ULL,
    0x048AC614BF52865FULL, 0xA30557C8BDA9E01FULL, 0x4D822629860BD5F9ULL, 0x0A748B2572C8DBABULL,
    0xA899A96E60FBED16ULL, 0xD1F9F76997E7EE24ULL, 0xB936502872D94334ULL, 0x953AD5B634C9D94EULL,
    0x3A69116B944D4A3EULL, 0xA313CBB63E60C6A9ULL, 0xBDFD9DF48111DB47ULL, 0x276D641FAEC413B3ULL,
    0xA7C945916D8D0B46ULL, 0xF268A607D721608DULL, 0xF412159864F78D6EULL, 0x888914E48DF58034ULL,
    0xF83D3D4F89936B4AULL, 0x82824D1952A42BAAULL, 0x61705BB2DB3797F9ULL, 0xA3AA5E705FBA6670ULL,
    0xD5C2B1D054EE4208ULL, 0x54DC3E71E8305725ULL, 0x13DC4AC8E4DDD7A0ULL, 0xAB91D51C97BDA0E2ULL,
    0x348FBF3359DFFE11ULL, 0x405739F8531E0F73ULL, 0xBD38E059FFF6C919ULL, 0x085E38827AFF6146ULL,
    0xD4CC221D6F2C2C6CULL, 0x4C7AC824055D4699ULL, 0xF3FA4D9811ECD791ULL, 0x4222B3E4E48C31D6ULL,
};

TEST(Rng, GoldenStream) {
  Rng rng(42);
  for (auto expected : kGoldenSeed42) EXPECT_EQ(rng.next_u64(), expected);
}

TEST(Rng, GoldenChildStream) {
  Rng parent(42);
  Rng child = parent.split(7);
  EXPECT_EQ(child.next_u64(), 0x377B153E3704997FULL);
  EXPECT_EQ(child.next_u64(), 0xEAC9EB5FB0CA7FDCULL);
  EXPECT_EQ(child.next_u64(), 0xA7580975ECB3EC7EULL);
}

TEST(Rng, SplitDoesNotAdvanceParentAndKeysDiffer) {
  Rng a(1), b(1);
  (void)a.split(3);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 100; ++k) firsts.insert(Rng(1).split(k).next_u64());
  EXPECT_EQ(firsts.size(), 100u);
}

TEST(Rng, UniformAndBelowRanges) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
    const int k = rng.uniform_int(-2, 2);
    ASSERT_GE(k, -2);
    ASSERT_LE(k, 2);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  EXPECT_LT(std::abs(mean), 0.01);
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(3);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(std::span<int>(v));
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_NE(v[0] + v[1] * 50, 0 + 1 * 50);
}

}  // namespace
}  // namespace mvsa
