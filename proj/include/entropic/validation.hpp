#pragma once

#include <string>
#include <vector>

#include "entropic/ensemble.hpp"
#include "entropic/scenarios.hpp"

namespace entropic {

struct CheckResult {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    bool pass = false;
    std::string detail;
};

/// Worst relative gap between the closed-form metric and its Gauss-Hermite quadrature
/// over `cases` random (Φ, x) pairs with D cycling through 1, 2, 3.
inline CheckResult check_metric_quadrature(std::uint64_t seed, std::size_t cases = 20, double limit = 1e-6) {
    double worst = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        RandomStream rs(seed, c, 0, StreamTag::auxiliary);
        const std::size_t D = 1 + c % 3;
        std::vector<double> sigma(D), x(D), k(D), center(D);
        for (std::size_t a = 0; a < D; ++a) {
            sigma[a] = 0.5 + rs.uniform();
            x[a] = 2.0 * rs.uniform() - 1.0;
            k[a] = 0.6 * rs.uniform() - 0.3;
            center[a] = 2.0 * rs.uniform() - 1.0;
        }
        ConfigurationSpace space(1, D, sigma);
        PhiField phi = c % 2 == 0 ? phi::exponential(k, 0.5 + 2.0 * rs.uniform())
                                  : phi::gaussian_bump(1.0 + rs.uniform(), 0.5 * rs.uniform(), center, 0.8 + rs.uniform());
        const auto closed = info_metric_closed(x, space, phi);
        const auto exact = info_metric_exact(x, space, phi);
        worst = std::max(worst, (closed - exact).norm() / exact.norm());
    }
    return {"metric_quadrature", worst, limit, worst <= limit, std::to_string(cases) + " random cases, D in {1,2,3}"};
}

/// Sup-norm gap between the numerical entropy maximiser and the closed-form kernel on a
/// 1D step grid, plus the relative error of the α recovered from the multiplier.
inline std::vector<CheckResult> check_me_maximizer(std::size_t points = 401, double alpha = 100.0) {
    ConfigurationSpace space(1, 1, 1.0);
    TransitionKernel k(space, phi::exponential({0.5}, 1.0), StepParams::from_alpha_tau(alpha, 1.0));
    const std::vector<double> x{0.1};
    const auto grid = k.step_grid(x, points, 8.0);
    const auto rep = k.verify_me_maximizer(x, grid);
    const double rel = std::abs(rep.recovered_alpha - alpha) / alpha;
    return {{"me_maximizer_deviation", rep.max_rel_deviation, 1e-6, rep.max_rel_deviation <= 1e-6,
             std::to_string(points) + "-point step grid"},
            {"me_recovered_alpha", rel, 1e-4, rel <= 1e-4, "relative error of recovered alpha"}};
}

/// Empirical E[Δx | x'] against the Bayes backward drift for a Gaussian ensemble.
inline CheckResult check_backward_drift(std::uint64_t seed, std::size_t walkers, unsigned threads,
                                        double min_fraction = 0.95) {
    ConfigurationSpace space(1, 1, 1.0);
    TransitionKernel k(space, phi::exponential({0.4}, 1.0), StepParams::from_tau_dt(1.0, 1e-2));
    const double s0 = 1.0;
    auto rho = ScalarField::separable(
        {[s0](double x) { return detail::gaussian_pdf(x, 0.0, s0); }},
        {[s0](double x) { return -x / (s0 * s0) * detail::gaussian_pdf(x, 0.0, s0); }});
    const GridSpec domain({{-8.0, 8.0, 256}});
    auto ens = init_ensemble(rho, walkers, seed, domain);
    TransitionPairs pairs;
    EvolveOptions opts;
    opts.threads = threads;
    opts.pairs = &pairs;
    evolve(ens, k, 1, opts);
    // density of x' after one step: the Gaussian convolved with the step
    const double b = k.forward_drift(std::vector<double>{0.0})[0];
    const double s1 = std::sqrt(s0 * s0 + k.step_sigma(0) * k.step_sigma(0));
    auto rho1 = ScalarField::separable(
        {[b, s1](double x) { return detail::gaussian_pdf(x, b * 1e-2, s1); }},
        {[b, s1](double x) { return -(x - b * 1e-2) / (s1 * s1) * detail::gaussian_pdf(x, b * 1e-2, s1); }});
    const GridSpec cells({{-4.0, 4.0, 40}});
    const auto rep = backward_drift_check(pairs, k, rho1, cells);
    return {"bayes_backward_drift", rep.pass_fraction(), min_fraction, rep.pass_fraction() >= min_fraction,
            std::to_string(rep.cells_passed) + "/" + std::to_string(rep.cells_checked) + " cells within 3 SE"};
}

} // namespace entropic
