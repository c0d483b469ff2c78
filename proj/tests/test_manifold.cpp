#include <cmath>

#include <gtest/gtest.h>

#include "entropic/manifold.hpp"

using namespace entropic;

namespace {

// log p(y|x) written out independently of the library.
double log_p(double y, double x, double sigma, const PhiField& phi) {
    const double f = phi(std::vector<double>{x});
    return 0.5 * std::log(f / (2.0 * M_PI * sigma * sigma)) - 0.5 * f * (y - x) * (y - x) / (sigma * sigma);
}

// Fisher information of the 1D family by trapezoid integration and central differences.
double fisher_trapezoid_1d(double x, double sigma, const PhiField& phi) {
    const double width = sigma / std::sqrt(phi(std::vector<double>{x}));
    const double h = 1e-5, lo = x - 14.0 * width, hi = x + 14.0 * width;
    const int n = 40000;
    const double dy = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double y = lo + i * dy;
        const double score = (log_p(y, x + h, sigma, phi) - log_p(y, x - h, sigma, phi)) / (2.0 * h);
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        sum += w * std::exp(log_p(y, x, sigma, phi)) * score * score;
    }
    return sum * dy;
}

} // namespace

TEST(ConfigurationSpace, ValidatesInputs) {
    EXPECT_THROW(ConfigurationSpace(4, 1, 1.0), UsageError);
    EXPECT_THROW(ConfigurationSpace(1, 0, 1.0), UsageError);
    EXPECT_THROW(ConfigurationSpace(1, 2, std::vector<double>{1.0, 2.0, 3.0}), UsageError);
    EXPECT_THROW(ConfigurationSpace(1, 1, -1.0), DomainError);
    ConfigurationSpace s(2, 2, std::vector<double>{1.0, 2.0});
    EXPECT_EQ(s.dims(), 4u);
    EXPECT_DOUBLE_EQ(s.gamma(3), 0.25);
    EXPECT_DOUBLE_EQ(s.volume_measure(), 0.25);
    EXPECT_THROW(s.check(std::vector<double>{0.0, 0.0}), UsageError);
}

TEST(PhiField, RejectsNonPositiveValues) {
    EXPECT_THROW(phi::constant(1, 0.0), DomainError);
    auto ramp = phi::linear_ramp(1.0, {1.0});
    EXPECT_THROW(ramp(std::vector<double>{-2.0}), DomainError);
    GridSpec g({{0.0, 1.0, 8}});
    RealField bad(g, 1.0);
    bad[3] = 1e-13;
    EXPECT_THROW(PhiField::from_grid(bad), DomainError);
}

TEST(Metric, ClosedFormMatchesTrapezoidOracle1D) {
    const double sigma = 0.8;
    ConfigurationSpace space(1, 1, sigma);
    for (auto phi : {phi::exponential({0.3}, 1.7), phi::gaussian_bump(1.2, 0.4, {0.3}, 0.9), phi::constant(1, 2.5)}) {
        for (double x : {-0.7, 0.0, 0.45}) {
            const std::vector<double> xs{x};
            const double oracle = fisher_trapezoid_1d(x, sigma, phi);
            EXPECT_NEAR(info_metric_closed(xs, space, phi)(0, 0), oracle, 1e-7 * oracle);
            EXPECT_NEAR(info_metric_exact(xs, space, phi)(0, 0), oracle, 1e-7 * oracle);
        }
    }
}

TEST(Metric, TwoDimensionalRankOneCorrection) {
    ConfigurationSpace space(2, 1, 1.3);
    const auto phi = phi::exponential({0.2, -0.5}, 0.9);
    const std::vector<double> x{0.4, -0.1};
    const auto g = info_metric_closed(x, space, phi);
    const double f = 0.9 * std::exp(0.2 * 0.4 + 0.5 * 0.1);
    // ∂Φ = kΦ, so the correction is (D/2) k kᵀ.
    EXPECT_NEAR(g(0, 0), f / (1.3 * 1.3) + 0.2 * 0.2, 1e-12);
    EXPECT_NEAR(g(0, 1), -0.2 * 0.5, 1e-12);
    EXPECT_NEAR(g(1, 1), f / (1.3 * 1.3) + 0.25, 1e-12);
    const auto q = info_metric_exact(x, space, phi);
    EXPECT_LT((g - q).norm() / g.norm(), 1e-6);
}

TEST(Metric, ConformalRatioBoundsTheCorrection) {
    ConfigurationSpace space(1, 3, 1.0);
    const auto phi = phi::exponential({0.01, 0.0, -0.01}, 3.0);
    const std::vector<double> x{0.0, 0.0, 0.0};
    const auto check = conformal_validity(x, space, phi);
    EXPECT_TRUE(check.valid);
    const auto full = info_metric_closed(x, space, phi);
    const auto conf = info_metric_closed(x, space, phi, MetricForm::conformal);
    const double rel = (full - conf).norm() / conf.norm();
    EXPECT_LE(rel, 0.5 * 3.0 * check.ratio + 1e-15);
    EXPECT_FALSE(conformal_validity(x, space, phi::exponential({3.0, 0.0, 0.0}, 0.1)).valid);
}

TEST(Entropy, MatchesNumericalDifferentialEntropy) {
    const double sigma = 1.5;
    ConfigurationSpace space(1, 1, sigma);
    const auto phi = phi::gaussian_bump(0.7, 0.6, {0.0}, 1.0);
    for (double x : {-1.0, 0.2, 2.0}) {
        const double f = phi(std::vector<double>{x});
        const double w = sigma / std::sqrt(f);
        const int n = 20000;
        const double lo = x - 14 * w, dy = 28 * w / n;
        double s = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double lp = log_p(lo + i * dy, x, sigma, phi);
            s -= ((i == 0 || i == n) ? 0.5 : 1.0) * std::exp(lp) * (lp + std::log(sigma));
        }
        s *= dy;
        EXPECT_NEAR(entropy(std::vector<double>{x}, space, phi), s, 1e-9);
    }
}

TEST(Entropy, GradientMatchesFiniteDifference) {
    ConfigurationSpace space(1, 2, 1.0);
    const auto phi = phi::gaussian_bump(1.0, 0.5, {0.1, -0.2}, 0.7);
    std::vector<double> x{0.3, 0.2};
    const auto g = entropy_gradient(x, space, phi);
    for (std::size_t a = 0; a < 2; ++a) {
        auto xp = x, xm = x;
        xp[a] += 1e-6;
        xm[a] -= 1e-6;
        EXPECT_NEAR(g[a], (entropy(xp, space, phi) - entropy(xm, space, phi)) / 2e-6, 1e-8);
    }
}

TEST(Density, NormalisedGaussian) {
    ConfigurationSpace space(1, 1, 0.5);
    const auto phi = phi::constant(1, 4.0);
    const std::vector<double> x{0.0};
    EXPECT_NEAR(gaussian_density(std::vector<double>{0.0}, x, space, phi), std::sqrt(16.0 / (2.0 * M_PI)), 1e-12);
}
