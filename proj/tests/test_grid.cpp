#include <cmath>

#include <gtest/gtest.h>

#include "entropic/grid.hpp"

using namespace entropic;

TEST(GridSpec, RejectsBadAxes) {
    EXPECT_THROW(GridSpec({{0.0, 1.0, 4}}), UsageError);
    EXPECT_THROW(GridSpec({{1.0, 1.0, 16}}), UsageError);
    EXPECT_THROW(GridSpec({{0.0, NAN, 16}}), UsageError);
    EXPECT_THROW(GridSpec::cube(3, -1.0, 1.0, 1024), UsageError);
}

TEST(GridSpec, CellCentresAndLocate) {
    GridSpec g({{-1.0, 1.0, 10}, {0.0, 4.0, 8}});
    EXPECT_EQ(g.size(), 80u);
    EXPECT_EQ(g.stride(0), 8u);
    EXPECT_EQ(g.stride(1), 1u);
    EXPECT_DOUBLE_EQ(g.axis(0).center(0), -0.9);
    EXPECT_DOUBLE_EQ(g.axis(1).center(7), 3.75);
    EXPECT_DOUBLE_EQ(g.cell_volume(), 0.2 * 0.5);
    const auto c = g.center(3 * 8 + 5);
    EXPECT_DOUBLE_EQ(c[0], -1.0 + 3.5 * 0.2);
    EXPECT_DOUBLE_EQ(c[1], 2.75);
    std::vector<double> x{-0.3, 2.6};
    ASSERT_TRUE(g.locate(x).has_value());
    EXPECT_EQ(*g.locate(x), 3u * 8u + 5u);
    std::vector<double> out{2.0, 1.0};
    EXPECT_FALSE(g.locate(out).has_value());
}

TEST(GridField, MidpointIntegralOfGaussian) {
    GridSpec g({{-10.0, 10.0, 400}});
    auto f = sample(g, [](std::span<const double> x) { return std::exp(-0.5 * x[0] * x[0]) / std::sqrt(2.0 * M_PI); });
    EXPECT_NEAR(integrate(f), 1.0, 1e-12);
}

TEST(Stencils, ExactOnQuadraticsIncludingEdges) {
    GridSpec g({{-2.0, 3.0, 16}});
    auto f = sample(g, [](std::span<const double> x) { return 1.5 * x[0] * x[0] - 2.0 * x[0] + 0.25; });
    const auto d = derivative(f, 0);
    const auto d2 = second_derivative(f, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.axis(0).center(i);
        EXPECT_NEAR(d[i], 3.0 * x - 2.0, 1e-11) << i;
        EXPECT_NEAR(d2[i], 3.0, 1e-9) << i;
    }
}

TEST(Stencils, PeriodicWrapsAround) {
    GridSpec g({{0.0, 2.0 * M_PI, 64}}, Boundary::periodic);
    auto f = sample(g, [](std::span<const double> x) { return std::sin(x[0]); });
    const auto d = derivative(f, 0);
    const double h = g.axis(0).spacing();
    for (std::size_t i = 0; i < g.size(); ++i)
        EXPECT_NEAR(d[i], std::cos(g.axis(0).center(i)) * std::sin(h) / h, 1e-12);
}

TEST(Stencils, PhaseDerivativeIgnoresBranchCut) {
    GridSpec g({{0.0, 10.0, 100}});
    auto wrapped = sample(g, [](std::span<const double> x) { return std::remainder(3.0 * x[0], 2.0 * M_PI); });
    const auto d = phase_derivative(wrapped, 0);
    for (std::size_t i = 2; i + 2 < g.size(); ++i) EXPECT_NEAR(d[i], 3.0, 1e-9);
}

TEST(Stencils, ComplexDerivative) {
    GridSpec g({{-1.0, 1.0, 32}});
    ComplexField f(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.axis(0).center(i);
        f[i] = {x * x, -x};
    }
    const auto d = derivative(f, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(d[i].real(), 2.0 * g.axis(0).center(i), 1e-12);
        EXPECT_NEAR(d[i].imag(), -1.0, 1e-12);
    }
}

TEST(Interpolate, ExactForBilinear) {
    GridSpec g({{0.0, 1.0, 8}, {-1.0, 1.0, 12}});
    auto f = sample(g, [](std::span<const double> x) { return 2.0 + x[0] - 3.0 * x[1] + 0.5 * x[0] * x[1]; });
    for (double a : {0.1, 0.37, 0.8})
        for (double b : {-0.9, 0.0, 0.55}) {
            std::vector<double> x{a, b};
            EXPECT_NEAR(interpolate(f, x), 2.0 + a - 3.0 * b + 0.5 * a * b, 1e-12);
        }
}
