#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "entropic/csv.hpp"
#include "entropic/quadrature.hpp"
#include "entropic/scalar_field.hpp"

namespace entropic {

inline constexpr double pi = 3.14159265358979323846264338328;
inline constexpr double two_pi = 2.0 * pi;

/// Flat configuration space of N particles in d dimensions with block metric
/// γ_AB = δ_AB / σ_n² (n the particle owning axis A).
class ConfigurationSpace {
public:
    ConfigurationSpace(std::size_t d, std::size_t particles, std::vector<double> sigma)
        : d_(d), particles_(particles), sigma_(std::move(sigma)) {
        if (d < 1 || d > 3) throw UsageError("spatial dimension must be 1, 2 or 3");
        if (particles < 1) throw UsageError("need at least one particle");
        if (sigma_.size() == 1 && particles > 1) sigma_.assign(particles, sigma_.front());
        if (sigma_.size() != particles) throw UsageError("need one sigma per particle");
        for (double s : sigma_)
            if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("sigma must be positive and finite");
    }

    ConfigurationSpace(std::size_t d, std::size_t particles, double sigma)
        : ConfigurationSpace(d, particles, std::vector<double>(particles, sigma)) {}

    std::size_t d() const noexcept { return d_; }
    std::size_t particles() const noexcept { return particles_; }
    std::size_t dims() const noexcept { return d_ * particles_; }
    const std::vector<double>& sigma() const noexcept { return sigma_; }

    double sigma_of_axis(std::size_t a) const { return sigma_.at(a / d_); }
    double gamma(std::size_t a) const {
        const double s = sigma_of_axis(a);
        return 1.0 / (s * s);
    }

    /// γ^{1/2} = Π_A σ_A^{-1}.
    double volume_measure() const {
        double v = 1.0;
        for (std::size_t a = 0; a < dims(); ++a) v /= sigma_of_axis(a);
        return v;
    }

    Eigen::MatrixXd metric() const {
        const auto n = static_cast<Eigen::Index>(dims());
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index a = 0; a < n; ++a) g(a, a) = gamma(static_cast<std::size_t>(a));
        return g;
    }

    void check(std::span<const double> x, const char* what = "position") const {
        if (x.size() != dims())
            throw UsageError(std::string(what) + " has " + std::to_string(x.size()) +
                             " components, configuration space has " + std::to_string(dims()));
    }

private:
    std::size_t d_;
    std::size_t particles_;
    std::vector<double> sigma_;
};

/// Positive conformal factor Φ(x) modulating the width of p(y|x).
class PhiField {
public:
    static constexpr double grid_floor = 1e-12;

    PhiField() = default;
    explicit PhiField(ScalarField f, std::string name = "custom") : field_(std::move(f)), name_(std::move(name)) {}

    /// Grid-sampled Φ; every sample must be at least `floor`.
    static PhiField from_grid(RealField samples, double floor = grid_floor) {
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (!(samples[i] >= floor))
                throw DomainError("phi grid value " + csv::format(samples[i]) + " at cell " + std::to_string(i) +
                                  " is below the floor " + csv::format(floor));
        return PhiField(ScalarField::from_grid(std::move(samples)), "grid");
    }

    static PhiField from_csv(const std::string& path, double floor = grid_floor) {
        return from_grid(csv::read_grid(path), floor);
    }

    std::size_t dims() const noexcept { return field_.dims(); }
    const std::string& name() const noexcept { return name_; }
    const ScalarField& field() const noexcept { return field_; }

    double operator()(std::span<const double> x) const {
        const double v = field_(x);
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("conformal factor must be positive, got " + csv::format(v));
        return v;
    }

    void gradient(std::span<const double> x, std::span<double> out) const { field_.gradient(x, out); }

private:
    ScalarField field_;
    std::string name_ = "custom";
};

/// Built-in closed forms for Φ.
namespace phi {

inline PhiField constant(std::size_t dims, double c) {
    if (!(c > 0.0)) throw DomainError("constant phi must be positive");
    return PhiField(ScalarField::closed_form(
                        dims, [c](std::span<const double>) { return c; },
                        [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); }),
                    "constant");
}

/// Φ = scale · exp(k·x).
inline PhiField exponential(std::vector<double> k, double scale = 1.0) {
    const std::size_t dims = k.size();
    auto value = [k, scale](std::span<const double> x) {
        double e = 0.0;
        for (std::size_t a = 0; a < k.size(); ++a) e += k[a] * x[a];
        return scale * std::exp(e);
    };
    auto grad = [k, value](std::span<const double> x, std::span<double> g) {
        const double v = value(x);
        for (std::size_t a = 0; a < k.size(); ++a) g[a] = k[a] * v;
    };
    return PhiField(ScalarField::closed_form(dims, value, grad), "exp");
}

/// Φ = base + slope·x; positivity is only checked where Φ is evaluated.
inline PhiField linear_ramp(double base, std::vector<double> slope) {
    const std::size_t dims = slope.size();
    auto value = [base, slope](std::span<const double> x) {
        double v = base;
        for (std::size_t a = 0; a < slope.size(); ++a) v += slope[a] * x[a];
        return v;
    };
    auto grad = [slope](std::span<const double>, std::span<double> g) {
        std::copy(slope.begin(), slope.end(), g.begin());
    };
    return PhiField(ScalarField::closed_form(dims, value, grad), "linear-ramp");
}

/// Φ = base + amplitude · exp(-|x - center|² / 2w²).
inline PhiField gaussian_bump(double base, double amplitude, std::vector<double> center, double width) {
    const std::size_t dims = center.size();
    auto value = [=](std::span<const double> x) {
        double r2 = 0.0;
        for (std::size_t a = 0; a < center.size(); ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
        return base + amplitude * std::exp(-0.5 * r2 / (width * width));
    };
    auto grad = [=](std::span<const double> x, std::span<double> g) {
        double r2 = 0.0;
        for (std::size_t a = 0; a < center.size(); ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
        const double e = amplitude * std::exp(-0.5 * r2 / (width * width));
        for (std::size_t a = 0; a < center.size(); ++a) g[a] = -e * (x[a] - center[a]) / (width * width);
    };
    return PhiField(ScalarField::closed_form(dims, value, grad), "gaussian-bump");
}

} // namespace phi

namespace detail {

inline void check_pair(const ConfigurationSpace& space, const PhiField& phi, std::span<const double> x) {
    space.check(x);
    if (phi.dims() != space.dims()) throw UsageError("phi field dimension does not match configuration space");
}

/// log p(y|x) for the isotropic-per-block Gaussian model.
inline double log_gaussian_density(std::span<const double> y, std::span<const double> x,
                                   const ConfigurationSpace& space, double phi_x) {
    double quad = 0.0, lognorm = 0.0;
    for (std::size_t a = 0; a < space.dims(); ++a) {
        const double dy = y[a] - x[a];
        quad += space.gamma(a) * dy * dy;
        const double s = space.sigma_of_axis(a);
        lognorm += 0.5 * std::log(phi_x / (two_pi * s * s));
    }
    return lognorm - 0.5 * phi_x * quad;
}

} // namespace detail

/// p(y|x) = Π_A (Φ(x) / 2πσ_A²)^{1/2} exp(-½ Φ(x) γ_AB Δy^A Δy^B), Δy = y - x.
inline double gaussian_density(std::span<const double> y, std::span<const double> x,
                               const ConfigurationSpace& space, const PhiField& phi) {
    detail::check_pair(space, phi, x);
    space.check(y, "y");
    return std::exp(detail::log_gaussian_density(y, x, space, phi(x)));
}

/// Entropy of p(·|x) relative to the flat measure: S = (D/2)[1 - log(Φ/2π)].
inline double entropy(std::span<const double> x, const ConfigurationSpace& space, const PhiField& phi) {
    detail::check_pair(space, phi, x);
    const double D = static_cast<double>(space.dims());
    return 0.5 * D * (1.0 - std::log(phi(x) / two_pi));
}

/// ∂_A S = -(D/2) ∂_A Φ / Φ.
inline std::vector<double> entropy_gradient(std::span<const double> x, const ConfigurationSpace& space,
                                            const PhiField& phi) {
    detail::check_pair(space, phi, x);
    const double v = phi(x);
    std::vector<double> g(space.dims());
    phi.gradient(x, g);
    const double c = -0.5 * static_cast<double>(space.dims()) / v;
    for (auto& gi : g) gi *= c;
    return g;
}

/// S(x) as a scalar field with its analytic gradient.
inline ScalarField entropy_field(const ConfigurationSpace& space, const PhiField& phi) {
    return ScalarField::closed_form(
        space.dims(), [space, phi](std::span<const double> x) { return entropy(x, space, phi); },
        [space, phi](std::span<const double> x, std::span<double> g) {
            const auto e = entropy_gradient(x, space, phi);
            std::copy(e.begin(), e.end(), g.begin());
        });
}

enum class MetricForm { exact, conformal };

/// Information metric in closed form: g_AB = Φ γ_AB + (D / 2Φ²) ∂_AΦ ∂_BΦ, or Φ γ_AB
/// when the conformal form is requested.
inline Eigen::MatrixXd info_metric_closed(std::span<const double> x, const ConfigurationSpace& space,
                                          const PhiField& phi, MetricForm form = MetricForm::exact) {
    detail::check_pair(space, phi, x);
    const double v = phi(x);
    Eigen::MatrixXd g = v * space.metric();
    if (form == MetricForm::conformal) return g;
    std::vector<double> dphi(space.dims());
    phi.gradient(x, dphi);
    const double c = 0.5 * static_cast<double>(space.dims()) / (v * v);
    const auto n = static_cast<Eigen::Index>(space.dims());
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            g(a, b) += c * dphi[static_cast<std::size_t>(a)] * dphi[static_cast<std::size_t>(b)];
    return g;
}

struct MetricQuadrature {
    std::size_t nodes = 40;          ///< Gauss-Hermite nodes per axis
    std::size_t check_nodes = 32;    ///< second rule used to detect non-convergence
    double convergence_tol = 1e-8;   ///< relative Frobenius gap allowed between the two rules
    double fd_step = 1e-5;           ///< score step, in units of the local width σ/√Φ
};

namespace detail {

inline Eigen::MatrixXd fisher_by_quadrature(std::span<const double> x, const ConfigurationSpace& space,
                                            const PhiField& phi, std::size_t nodes, double fd_step) {
    const std::size_t D = space.dims();
    const double phi_x = phi(x);
    const GaussHermite rule(nodes);
    std::vector<double> width(D), h(D);
    for (std::size_t a = 0; a < D; ++a) {
        width[a] = space.sigma_of_axis(a) / std::sqrt(phi_x);
        h[a] = fd_step * width[a];
    }
    std::vector<double> y(D), xs(x.begin(), x.end()), score(D);
    const auto n = static_cast<Eigen::Index>(D);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    const double norm = std::pow(pi, -0.5 * static_cast<double>(D));
    tensor_gauss_hermite(rule, D, [&](const std::vector<double>& z, double w) {
        // y = x + √2 (σ/√Φ) z turns p(y|x) dy into π^{-D/2} e^{-|z|²} dz
        for (std::size_t a = 0; a < D; ++a) y[a] = x[a] + std::sqrt(2.0) * width[a] * z[a];
        for (std::size_t a = 0; a < D; ++a) {
            xs[a] = x[a] + h[a];
            const double lp = log_gaussian_density(y, xs, space, phi(xs));
            xs[a] = x[a] - h[a];
            const double lm = log_gaussian_density(y, xs, space, phi(xs));
            xs[a] = x[a];
            score[a] = (lp - lm) / (2.0 * h[a]);
        }
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b <= a; ++b)
                g(a, b) += norm * w * score[static_cast<std::size_t>(a)] * score[static_cast<std::size_t>(b)];
    });
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < a; ++b) g(b, a) = g(a, b);
    return g;
}

} // namespace detail

/// Information metric g_AB = ∫ p ∂_A log p ∂_B log p dy evaluated numerically: product
/// Gauss-Hermite over y and central differences of log p(y|x) in x. Limited to D ≤ 3.
inline Eigen::MatrixXd info_metric_exact(std::span<const double> x, const ConfigurationSpace& space,
                                         const PhiField& phi, const MetricQuadrature& opts = {}) {
    detail::check_pair(space, phi, x);
    if (space.dims() > 3) throw UsageError("quadrature metric is limited to total dimension D <= 3");
    Eigen::MatrixXd g = detail::fisher_by_quadrature(x, space, phi, opts.nodes, opts.fd_step);
    Eigen::MatrixXd g_check = detail::fisher_by_quadrature(x, space, phi, opts.check_nodes, opts.fd_step);
    const double gap = (g - g_check).norm() / g.norm();
    if (!std::isfinite(gap) || gap > opts.convergence_tol)
        throw NumericalError("metric quadrature did not converge: " + std::to_string(opts.nodes) + " vs " +
                             std::to_string(opts.check_nodes) + " nodes differ by " + csv::format(gap) +
                             " (relative), Φ(x)=" + csv::format(phi(x)));
    return g;
}

struct ConformalCheck {
    double ratio = 0.0;
    bool valid = true;
};

/// r = γ^{AB} ∂_AΦ ∂_BΦ / Φ³, i.e. |∂Φ/Φ|² measured against Φ/σ². The conformal form
/// Φγ is flagged valid while r < threshold.
inline ConformalCheck conformal_validity(std::span<const double> x, const ConfigurationSpace& space,
                                         const PhiField& phi, double threshold = 1e-3) {
    detail::check_pair(space, phi, x);
    const double v = phi(x);
    std::vector<double> g(space.dims());
    phi.gradient(x, g);
    double num = 0.0;
    for (std::size_t a = 0; a < space.dims(); ++a) num += g[a] * g[a] / space.gamma(a);
    const double r = num / (v * v * v);
    return {r, r < threshold};
}

} // namespace entropic
