#include <gtest/gtest.h>
#include <gmock/gmock.h>

#include <functional>
#include <random>
#include <set>

#include "labelsweep/predstore.hpp"
#include "test_util.hpp"

using namespace labelsweep;
using labelsweep::testing::make_pm;
using labelsweep::testing::TempDir;
using ::testing::StartsWith;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Predstore, FileSizeIsHeaderPlusPayload) {
  TempDir tmp;
  const auto pm = make_pm({{0.2f, 0.3f, 0.5f}, {1.0f, 0.0f, 0.0f}});
  write_probs(pm, tmp / "m.cprb");
  EXPECT_EQ(std::filesystem::file_size(tmp / "m.cprb"), 44u);
}

TEST(Predstore, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_probs(make_pm({{0.25f, 0.75f}}));
  ASSERT_EQ(bytes.size(), 28u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CPRB");
  EXPECT_EQ(bytes[4], 1);  // version
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  EXPECT_EQ(bytes[8], 1);  // n, u64
  for (int b = 9; b < 16; ++b) EXPECT_EQ(bytes[b], 0);
  EXPECT_EQ(bytes[16], 2);  // c, u32
  // 0.25f = 0x3e800000
  EXPECT_EQ(bytes[20], 0x00);
  EXPECT_EQ(bytes[21], 0x00);
  EXPECT_EQ(bytes[22], 0x80);
  EXPECT_EQ(bytes[23], 0x3e);
}

TEST(Predstore, WriteRejectsInvalidMatrices) {
  TempDir tmp;
  EXPECT_THAT(error_of([&] { write_probs(ProbabilityMatrix("m", 0, 3), tmp / "e.cprb"); }), StartsWith("empty matrix"));
  EXPECT_THAT(error_of([&] { write_probs(make_pm({{0.5f, 0.6f}}), tmp / "u.cprb"); }), StartsWith("row not normalized"));
  EXPECT_THAT(error_of([&] { write_probs(make_pm({{1.5f, -0.5f}}), tmp / "r.cprb"); }),
              StartsWith("probability out of range"));
}

TEST(Predstore, RoundTripRandom5x4) {
  TempDir tmp;
  std::mt19937_64 rng(11);
  const auto pm = labelsweep::testing::random_pm(rng, 5, 4, "roundtrip");
  write_probs(pm, tmp / "roundtrip.cprb");
  const auto back = read_probs(tmp / "roundtrip.cprb", 5, 4);
  EXPECT_EQ(back, pm);
}

TEST(Predstore, ReadWriteIsIdentityOnRandomMatrices) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 1 + rng() % 40, c = 1 + rng() % 12;
    const auto pm = labelsweep::testing::random_pm(rng, n, c, "p");
    const auto bytes = encode_probs(pm);
    ASSERT_EQ(bytes.size(), kProbHeaderBytes + 4 * n * c);
    const auto back = decode_probs(bytes, "p", n, c);
    ASSERT_EQ(back, pm);
    ASSERT_EQ(encode_probs(back), bytes);
  }
}

TEST(Predstore, ReadRejectsCorruptFiles) {
  auto bytes = encode_probs(make_pm({{0.5f, 0.5f}, {0.1f, 0.9f}}));
  {
    auto bad = bytes;
    std::copy_n("XXXX", 4, bad.begin());
    EXPECT_THAT(error_of([&] { decode_probs(bad, "m"); }), StartsWith("bad magic"));
  }
  {
    const std::vector<std::uint8_t> bad(bytes.begin(), bytes.begin() + 12);
    EXPECT_THAT(error_of([&] { decode_probs(bad, "m"); }), StartsWith("truncated header"));
  }
  {
    auto bad = bytes;
    bad[4] = 2;
    EXPECT_THAT(error_of([&] { decode_probs(bad, "m"); }), StartsWith("version mismatch"));
  }
  {
    // header says 100 rows, payload holds 2
    auto bad = bytes;
    bad[8] = 100;
    EXPECT_THAT(error_of([&] { decode_probs(bad, "m"); }), StartsWith("truncated payload"));
  }
  {
    auto bad = bytes;
    bad.resize(bad.size() - 1);
    EXPECT_THAT(error_of([&] { decode_probs(bad, "m"); }), StartsWith("truncated payload"));
  }
  EXPECT_THAT(error_of([&] { decode_probs(bytes, "m", 3, 2); }), StartsWith("dimension mismatch"));
  EXPECT_THAT(error_of([&] { decode_probs(bytes, "m", 2, 5); }), StartsWith("dimension mismatch"));
  EXPECT_NO_THROW(decode_probs(bytes, "m", 2, 2));
}

TEST(Predstore, TopKOrdering) {
  EXPECT_EQ(top_k(make_pm({{0.2f, 0.5f, 0.3f}}), 2).indices, (std::vector<int>{1, 2}));
  EXPECT_EQ(top_k(make_pm({{0.25f, 0.25f, 0.5f}}), 3).indices, (std::vector<int>{2, 0, 1}));
  std::vector<float> onehot(10, 0.0f);
  onehot[7] = 1.0f;
  EXPECT_EQ(top_k(make_pm({onehot}), 1).indices, (std::vector<int>{7}));
  EXPECT_THROW(top_k(make_pm({{0.5f, 0.5f}}), 0), Error);
  EXPECT_THROW(top_k(make_pm({{0.5f, 0.5f}}), 3), Error);
}

TEST(Predstore, TopKIsPrefixClosed) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto pm = labelsweep::testing::random_pm(rng, 20, 8);
    // force ties on a few rows
    for (std::size_t i = 0; i < pm.n; i += 4) {
      auto r = pm.row(i);
      std::fill(r.begin(), r.end(), 0.125f);
    }
    for (std::size_t k = 1; k < pm.c; ++k) {
      const auto a = top_k(pm, k), b = top_k(pm, k + 1);
      for (std::size_t i = 0; i < pm.n; ++i) {
        const auto ra = a.row(i), rb = b.row(i);
        ASSERT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin())) << "row " << i << " k " << k;
        ASSERT_EQ(std::set<int>(rb.begin(), rb.end()).size(), k + 1);
      }
    }
  }
}
