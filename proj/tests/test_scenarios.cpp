#include <cmath>

#include <gtest/gtest.h>

#include "entropic/config.hpp"

using namespace entropic;

TEST(Scenarios, EveryShippedScenarioBuilds) {
    const auto specs = scenarios::all();
    EXPECT_EQ(specs.size(), 7u);
    for (const auto& s : specs) {
        const auto sc = build_scenario(s);
        EXPECT_NEAR(integrate(sc.initial.rho), 1.0, 1e-12) << s.name;
        EXPECT_EQ(sc.sample_times().size(), s.samples + 1);
        EXPECT_DOUBLE_EQ(sc.sample_times().back(), s.horizon);
        // tails reach the density floor before the walls
        const auto o = density_observables(sc.initial.rho, 0);
        EXPECT_LT(o.boundary_mass, 1e-8) << s.name;
    }
    EXPECT_EQ(scenarios::by_name("free-packet-1d").oracle, "free_packet");
    EXPECT_THROW(scenarios::by_name("nope"), UsageError);
}

TEST(Scenarios, ManifestRoundTrip) {
    for (const auto& s : scenarios::all()) {
        const auto j = to_json(s);
        const auto back = scenario_from_json(j);
        EXPECT_EQ(to_json(back).dump(), j.dump()) << s.name;
    }
}

TEST(Scenarios, BuildRejectsMismatchedSizes) {
    auto s = scenarios::free_packet_1d();
    s.cells = {64, 64};
    EXPECT_THROW(build_scenario(s), UsageError);
    s = scenarios::free_packet_1d();
    s.initial.width = {-1.0};
    EXPECT_THROW(build_scenario(s), DomainError);
    s = scenarios::free_packet_1d();
    s.tau = 3.0;
    EXPECT_THROW(build_scenario(s), DomainError);
}

TEST(Oracles, FreePacketPsiSolvesTheFreeEquation) {
    const FreePacket p{0.3, 1.1, 0.7, 0.8, 1.5};
    const double x = 0.9, t = 0.6, h = 1e-4;
    const auto psi = [&](double y, double s) { return p.psi(y, s); };
    const cplx dt = (psi(x, t + h) - psi(x, t - h)) / (2.0 * h);
    const cplx dxx = (psi(x + h, t) - 2.0 * psi(x, t) + psi(x - h, t)) / (h * h);
    const cplx lhs = cplx(0.0, p.eta) * dt, rhs = -p.eta * p.eta / (2.0 * p.m) * dxx;
    EXPECT_LT(std::abs(lhs - rhs), 1e-5 * std::abs(rhs));
    // |psi|² integrates to one with the stated width and centre
    double mass = 0, mean = 0, var = 0;
    for (int i = -4000; i <= 4000; ++i) {
        const double y = 0.005 * i;
        const double r = std::norm(psi(y, t));
        mass += r * 0.005;
        mean += y * r * 0.005;
    }
    for (int i = -4000; i <= 4000; ++i) {
        const double y = 0.005 * i;
        var += (y - mean) * (y - mean) * std::norm(psi(y, t)) * 0.005;
    }
    EXPECT_NEAR(mass, 1.0, 1e-10);
    EXPECT_NEAR(mean, p.center(t), 1e-10);
    EXPECT_NEAR(std::sqrt(var), p.width(t), 1e-10);
}

TEST(Oracles, HarmonicStates) {
    const HarmonicOscillator h{2.0, 0.5, 1.5, 1.0};
    EXPECT_DOUBLE_EQ(h.width(), std::sqrt(0.5 / 6.0));
    EXPECT_DOUBLE_EQ(h.center(M_PI / 4.0, HarmonicMode::coherent), std::cos(M_PI / 2.0));
    EXPECT_DOUBLE_EQ(h.center(1.0, HarmonicMode::ground), 0.0);
    const auto sc = build_scenario(scenarios::harmonic_ground_1d());
    const auto o = sc.oracle(1.0);
    ASSERT_TRUE(o.has_value());
    EXPECT_LT(l2_distance(o->rho, sc.initial.rho), 1e-12);
    EXPECT_NEAR(o->phi[0], -0.5, 1e-15);
}

TEST(Oracles, DriftDiffusionMoments) {
    const auto sc = build_scenario(scenarios::phi_gradient_1d());
    const auto o = density_observables(sc.oracle(1.0)->rho, 1.0);
    EXPECT_NEAR(o.mean[0], -0.5, 1e-9);
    EXPECT_NEAR(o.variance[0], 2.0, 1e-6);
    EXPECT_FALSE(build_scenario(scenarios::two_particle_1d()).oracle(0.5).has_value());
}

TEST(Observables, MomentsBoundaryMassAndMinimum) {
    GridSpec g({{0.0, 10.0, 100}});
    RealField rho(g, 0.1);
    const auto o = density_observables(rho, 2.5);
    EXPECT_DOUBLE_EQ(o.t, 2.5);
    EXPECT_NEAR(o.norm, 1.0, 1e-12);
    EXPECT_NEAR(o.mean[0], 5.0, 1e-12);
    EXPECT_NEAR(o.variance[0], 100.0 / 12.0 - 0.01 / 12.0, 1e-9);
    EXPECT_NEAR(o.boundary_mass, 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(o.min_rho, 0.1);
    EXPECT_TRUE(std::isnan(o.energy));
}

TEST(Distances, L1L2AndKl) {
    GridSpec g({{0.0, 2.0, 8}});
    RealField p(g), q(g);
    p.values.assign(8, 1.0);
    q.values = {2.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    EXPECT_DOUBLE_EQ(l1_distance(p, q), 0.5);
    EXPECT_DOUBLE_EQ(l2_distance(p, q), std::sqrt(0.5));
    const auto kl = kl_divergence(p, q);
    EXPECT_TRUE(kl.support_mismatch);
    EXPECT_TRUE(std::isinf(kl.value));
    const auto back = kl_divergence(q, p);
    EXPECT_FALSE(back.support_mismatch);
    EXPECT_NEAR(back.value, 0.25 * 2.0 * std::log(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(kl_divergence(p, p).value, 0.0);
    RealField other(GridSpec({{0.0, 4.0, 8}}), 1.0);
    EXPECT_THROW(l1_distance(p, other), UsageError);
}

TEST(Distances, CoarseningPreservesMass) {
    GridSpec g({{-1.0, 1.0, 48}, {0.0, 3.0, 24}});
    auto f = sample(g, [](std::span<const double> x) { return 1.0 + x[0] * x[1]; });
    const auto c = coarsen(f, 3);
    EXPECT_EQ(c.spec.axis(0).n, 16u);
    EXPECT_EQ(c.spec.axis(1).n, 8u);
    EXPECT_NEAR(integrate(c), integrate(f), 1e-12);
    EXPECT_THROW(coarsen(f, 5), UsageError);
}
