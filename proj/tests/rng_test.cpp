#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "crossview/rng.hpp"

using crossview::Rng;

TEST(RngTest, MatchesSplitMix64ReferenceVectors) {
    // Published splitmix64 outputs for state 0 and 1234567.
    Rng r0(0);
    EXPECT_EQ(r0.next_u64(), 0xe220a8397b1dcdafull);
    EXPECT_EQ(r0.next_u64(), 0x6e789e6aa1b965f4ull);
    EXPECT_EQ(r0.next_u64(), 0x06c45d188009454full);
    EXPECT_EQ(r0.next_u64(), 0xf88bb8a8724c81ecull);

    Rng r1(1234567);
    EXPECT_EQ(r1.next_u64(), 6457827717110365317ull);
    EXPECT_EQ(r1.next_u64(), 3203168211198807973ull);
    EXPECT_EQ(r1.next_u64(), 9817491932198370423ull);
    EXPECT_EQ(r1.next_u64(), 4593380528125082431ull);
    EXPECT_EQ(r1.next_u64(), 16408922859458223821ull);
}

TEST(RngTest, StateRoundTripResumesStream) {
    Rng a(42);
    for (int i = 0; i < 17; ++i) a.next_u64();
    Rng b(a.seed(), a.calls());
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngTest, DoublesInUnitInterval) {
    Rng r(7);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = r.next_double();
        ASSERT_GE(v, 0.0);
        ASSERT_LT(v, 1.0);
        mean += v;
    }
    mean /= n;
    EXPECT_NEAR(mean, 0.5, 0.01);
}

TEST(RngTest, NormalMomentsReasonable) {
    Rng r(11);
    const int n = 50000;
    double mean = 0.0, var = 0.0;
    std::vector<double> vals(n);
    for (auto& v : vals) v = r.normal();
    for (double v : vals) mean += v;
    mean /= n;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= n;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(RngTest, TruncNormalRespectsClip) {
    Rng r(13);
    for (int i = 0; i < 20000; ++i) {
        EXPECT_LE(std::abs(r.trunc_normal(0.02)), 0.04 + 1e-12);
    }
}

TEST(RngTest, NextIntUniformRange) {
    Rng r(5);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 100000; ++i) {
        const int v = r.next_int(10);
        ASSERT_GE(v, 0);
        ASSERT_LT(v, 10);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(RngTest, ChildStreamsIndependentOfParentPosition) {
    Rng a(99);
    const auto direct = Rng(99).child(3).next_u64();
    a.next_u64();
    a.next_u64();
    EXPECT_EQ(a.child(3).next_u64(), direct);
    EXPECT_NE(Rng(99).child(3).next_u64(), Rng(99).child(4).next_u64());
}

TEST(RngTest, ShuffleIsDeterministicPermutation) {
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    Rng r(21);
    r.shuffle(v.begin(), v.end());
    std::vector<int> w(100);
    std::iota(w.begin(), w.end(), 0);
    Rng r2(21);
    r2.shuffle(w.begin(), w.end());
    EXPECT_EQ(v, w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}
