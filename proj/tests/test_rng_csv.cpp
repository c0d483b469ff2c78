#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "entropic/csv.hpp"
#include "entropic/parallel.hpp"
#include "entropic/rng.hpp"

using namespace entropic;

// Known-answer vectors published with the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswers) {
    using C = Philox4x32::Counter;
    EXPECT_EQ(Philox4x32::generate({0, 0, 0, 0}, {0, 0}), (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(Philox4x32::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
              (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(Philox4x32::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
              (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RandomStream, ReproducibleAndDistinct) {
    RandomStream a(42, 7, 3), b(42, 7, 3), c(42, 8, 3), d(42, 7, 4), e(42, 7, 3, StreamTag::init);
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_NE(x, c.uniform());
    EXPECT_NE(x, d.uniform());
    EXPECT_NE(x, e.uniform());
}

TEST(RandomStream, MomentsOfUniformAndNormal) {
    const int n = 200000;
    double su = 0, suu = 0, sn = 0, snn = 0, s4 = 0;
    for (int w = 0; w < n / 100; ++w) {
        RandomStream rs(1, w, 0);
        for (int k = 0; k < 100; ++k) {
            const double u = rs.uniform();
            ASSERT_GT(u, 0.0);
            ASSERT_LT(u, 1.0);
            su += u;
            suu += u * u;
            const double z = rs.normal();
            sn += z;
            snn += z * z;
            s4 += z * z * z * z;
        }
    }
    EXPECT_NEAR(su / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
    EXPECT_NEAR(suu / n - 0.25, 1.0 / 12, 0.002);
    EXPECT_NEAR(sn / n, 0.0, 5 / std::sqrt(double(n)));
    EXPECT_NEAR(snn / n, 1.0, 5 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 5 * std::sqrt(96.0 / n));
}

TEST(Parallel, CoversRangeOnceAndRethrows) {
    std::vector<int> hits(1001, 0);
    parallel_for(hits.size(), 7, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) ++hits[i];
    });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(100, 4, [](std::size_t b, std::size_t) {
                     if (b > 0) throw std::runtime_error("boom");
                 }),
                 std::runtime_error);
}

TEST(Csv, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e-12}) EXPECT_EQ(csv::parse(csv::format(v)), v);
    EXPECT_EQ(csv::format(0.1), "0.1");
    EXPECT_EQ(csv::format(2.0), "2");
    EXPECT_EQ(csv::format(NAN), "nan");
    EXPECT_EQ(csv::format(-INFINITY), "-inf");
    EXPECT_TRUE(std::isinf(csv::parse("inf")));
}

TEST(Csv, GridRoundTripIsByteStable) {
    GridSpec g({{-1.0, 1.0, 8}, {0.0, 2.0, 9}});
    auto f = sample(g, [](std::span<const double> x) { return std::exp(x[0]) / (1.0 + x[1]); });
    std::ostringstream first;
    csv::write_grid(first, f);
    std::istringstream in(first.str());
    const auto back = csv::read_grid(in);
    EXPECT_TRUE(back.spec == g);
    EXPECT_EQ(back.values, f.values);
    std::ostringstream second;
    csv::write_grid(second, back);
    EXPECT_EQ(first.str(), second.str());
}

TEST(Csv, MalformedGridIsRejected) {
    std::istringstream bad("8,-1,1\n1,2,3\n");
    EXPECT_THROW(csv::read_grid(bad), Error);
}
