#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "entropic/fields.hpp"

namespace entropic {

/// V(x) = Σ_A m_A ω² x_A²/2 + coupling·(x_1 - x_2)²/2 + quartic·Σ x_A⁴.
struct PotentialSpec {
    std::string kind = "zero";   ///< zero | harmonic | anharmonic
    double omega = 1.0;
    double coupling = 0.0;
    double quartic = 0.0;
};

/// Φ(x) = value (constant) or value·exp(k·x) (exp).
struct PhiSpec {
    std::string kind = "constant";
    double value = 1.0;
    std::vector<double> k;
};

/// Product Gaussian ρ₀ with per-axis centre and standard deviation; φ₀ = momentum·x.
struct InitialSpec {
    std::vector<double> center;
    std::vector<double> width;
    std::vector<double> momentum;
};

/// Everything needed to rebuild a run; plain data, serialisable to a manifest.
struct ScenarioSpec {
    std::string name;
    std::string description;
    std::size_t d = 1;
    std::size_t particles = 1;
    std::vector<double> lo, hi;
    std::vector<std::size_t> cells;
    std::vector<double> m{1.0}, mu{1.0}, sigma{1.0};
    double eta = 1.0;
    double tau = 1.0;
    PotentialSpec potential;
    PhiSpec phi;
    InitialSpec initial;
    double horizon = 1.0;
    std::size_t samples = 10;       ///< sample intervals over the horizon
    double dt = 0.0;                ///< grid-solver step; 0 picks a stable default
    double step_dt = 1e-2;          ///< kernel Δt for the ensemble
    std::size_t walkers = 100000;
    std::string oracle = "none";    ///< free_packet | harmonic_ground | harmonic_coherent | drift_diffusion | none

    std::size_t dims() const noexcept { return d * particles; }
};

struct Scenario {
    ScenarioSpec spec;
    GridSpec grid;
    ModelParams params;
    PhiField phi;
    FieldState initial;

    ConfigurationSpace space() const { return params.space(); }
    /// Product-form ρ₀ for walker initialisation.
    ScalarField initial_density() const;
    /// Closed-form (ρ, φ) at time t, when the scenario has one.
    std::optional<FieldState> oracle(double t) const;
    std::vector<double> sample_times() const {
        std::vector<double> out;
        for (std::size_t i = 0; i <= spec.samples; ++i)
            out.push_back(spec.horizon * static_cast<double>(i) / static_cast<double>(spec.samples));
        return out;
    }
};

inline ScalarField potential_field(const PotentialSpec& v, const std::vector<double>& masses_per_axis) {
    const std::size_t D = masses_per_axis.size();
    if (v.kind == "zero") return {};
    if (v.kind != "harmonic" && v.kind != "anharmonic") throw UsageError("unknown potential kind '" + v.kind + "'");
    if (v.coupling != 0.0 && D < 2) throw UsageError("potential coupling needs at least two axes");
    const double quartic = v.kind == "anharmonic" ? v.quartic : 0.0;
    auto value = [v, quartic, masses_per_axis](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t a = 0; a < x.size(); ++a)
            s += 0.5 * masses_per_axis[a] * v.omega * v.omega * x[a] * x[a] + quartic * x[a] * x[a] * x[a] * x[a];
        if (v.coupling != 0.0) s += 0.5 * v.coupling * (x[0] - x[1]) * (x[0] - x[1]);
        return s;
    };
    auto grad = [v, quartic, masses_per_axis](std::span<const double> x, std::span<double> g) {
        for (std::size_t a = 0; a < x.size(); ++a)
            g[a] = masses_per_axis[a] * v.omega * v.omega * x[a] + 4.0 * quartic * x[a] * x[a] * x[a];
        if (v.coupling != 0.0) {
            g[0] += v.coupling * (x[0] - x[1]);
            g[1] -= v.coupling * (x[0] - x[1]);
        }
    };
    return ScalarField::closed_form(D, value, grad);
}

inline PhiField phi_from_spec(const PhiSpec& s, std::size_t dims) {
    if (!(s.value > 0.0)) throw DomainError("phi field value must be positive");
    if (s.kind == "constant") return phi::constant(dims, s.value);
    if (s.kind == "exp") {
        if (s.k.size() != dims) throw UsageError("phi field 'exp' needs one rate per axis");
        return phi::exponential(s.k, s.value);
    }
    throw UsageError("unknown phi field kind '" + s.kind + "'");
}

namespace detail {

inline double gaussian_pdf(double x, double c, double s) {
    const double z = (x - c) / s;
    return std::exp(-0.5 * z * z) / (s * std::sqrt(two_pi));
}

} // namespace detail

/// Checks sizes and ranges of a spec and assembles grid, parameters and initial fields.
inline Scenario build_scenario(const ScenarioSpec& s) {
    const std::size_t D = s.dims();
    if (D == 0 || D > 3) throw UsageError("scenario '" + s.name + "': grid scenarios need 1 <= D <= 3");
    auto need = [&](std::size_t got, const char* what) {
        if (got != D) throw UsageError("scenario '" + s.name + "': " + what + " needs " + std::to_string(D) + " entries");
    };
    need(s.lo.size(), "grid.lo");
    need(s.hi.size(), "grid.hi");
    need(s.cells.size(), "grid.cells");
    need(s.initial.center.size(), "initial.center");
    need(s.initial.width.size(), "initial.width");
    need(s.initial.momentum.size(), "initial.momentum");
    if (!(s.horizon > 0.0) || s.samples == 0) throw UsageError("scenario '" + s.name + "': horizon and samples must be positive");
    for (double w : s.initial.width)
        if (!(w > 0.0)) throw DomainError("initial.width must be positive");

    std::vector<Axis> axes;
    for (std::size_t a = 0; a < D; ++a) axes.push_back({s.lo[a], s.hi[a], s.cells[a]});
    GridSpec grid(axes);

    ModelParams p;
    p.d = s.d;
    p.particles = s.particles;
    p.m = s.m;
    p.mu = s.mu;
    p.sigma = s.sigma;
    p.eta = s.eta;
    p.tau = s.tau;
    p.validate();
    std::vector<double> axis_mass(D);
    for (std::size_t a = 0; a < D; ++a) axis_mass[a] = p.mass(a);
    p.potential = potential_field(s.potential, axis_mass);

    FieldState init{RealField(grid), RealField(grid), 0.0};
    std::vector<double> x(D);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid.center(i, x);
        double r = 1.0, ph = 0.0;
        for (std::size_t a = 0; a < D; ++a) {
            r *= detail::gaussian_pdf(x[a], s.initial.center[a], s.initial.width[a]);
            ph += s.initial.momentum[a] * (x[a] - s.initial.center[a]);
        }
        init.rho[i] = r;
        init.phi[i] = ph;
    }
    const double mass = integrate(init.rho);
    for (auto& v : init.rho.values) v /= mass;

    return Scenario{s, grid, std::move(p), phi_from_spec(s.phi, D), std::move(init)};
}

inline ScalarField Scenario::initial_density() const {
    std::vector<ScalarField::Factor> f, df;
    for (std::size_t a = 0; a < spec.dims(); ++a) {
        const double c = spec.initial.center[a], w = spec.initial.width[a];
        f.push_back([c, w](double x) { return detail::gaussian_pdf(x, c, w); });
        df.push_back([c, w](double x) { return -(x - c) / (w * w) * detail::gaussian_pdf(x, c, w); });
    }
    return ScalarField::separable(f, df);
}

/// Closed-form free Gaussian packet: ρ has centre x₀ + (ηk₀/m)t and
/// width²(t) = s₀²(1 + (ηt/2ms₀²)²); the phase is arg Ψ.
struct FreePacket {
    double x0 = 0.0;
    double s0 = 1.0;
    double k0 = 0.0;
    double eta = 1.0;
    double m = 1.0;

    double width(double t) const {
        const double r = eta * t / (2.0 * m * s0 * s0);
        return s0 * std::sqrt(1.0 + r * r);
    }
    double center(double t) const { return x0 + eta * k0 / m * t; }
    cplx psi(double x, double t) const {
        const cplx q(1.0, eta * t / (2.0 * m * s0 * s0));
        const double dx = x - x0;
        const cplx e = (-dx * dx / (4.0 * s0 * s0) + cplx(0.0, k0 * dx) - cplx(0.0, eta * k0 * k0 * t / (2.0 * m))) / q;
        return std::pow(two_pi * s0 * s0, -0.25) / std::sqrt(q) * std::exp(e);
    }
};

inline FieldState analytic_free_packet(double t, const FreePacket& p, const GridSpec& grid) {
    if (grid.dims() != 1) throw UsageError("analytic_free_packet is one-dimensional");
    FieldState s{RealField(grid), RealField(grid), t};
    const double w = p.width(t), c = p.center(t);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.axis(0).center(i);
        s.rho[i] = detail::gaussian_pdf(x, c, w);
        s.phi[i] = std::arg(p.psi(x, t));
    }
    return s;
}

enum class HarmonicMode { ground, coherent };

/// Ground state (stationary, phase -ωt/2) or coherent state (rigid Gaussian at
/// x₀cos ωt with momentum -mωx₀ sin ωt) of V = mω²x²/2.
struct HarmonicOscillator {
    double omega = 1.0;
    double eta = 1.0;
    double m = 1.0;
    double x0 = 0.0;

    double width() const { return std::sqrt(eta / (2.0 * m * omega)); }
    double center(double t, HarmonicMode mode) const { return mode == HarmonicMode::ground ? 0.0 : x0 * std::cos(omega * t); }
};

inline FieldState analytic_harmonic(double t, HarmonicMode mode, const HarmonicOscillator& h, const GridSpec& grid) {
    if (grid.dims() != 1) throw UsageError("analytic_harmonic is one-dimensional");
    FieldState s{RealField(grid), RealField(grid), t};
    const double w = h.width(), c = h.center(t, mode);
    const double p = mode == HarmonicMode::ground ? 0.0 : -h.m * h.omega * h.x0 * std::sin(h.omega * t);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.axis(0).center(i);
        s.rho[i] = detail::gaussian_pdf(x, c, w);
        s.phi[i] = p * x / h.eta - 0.5 * h.omega * t;
    }
    return s;
}

inline std::optional<FieldState> Scenario::oracle(double t) const {
    const auto& s = spec;
    if (s.oracle == "none") return std::nullopt;
    if (s.oracle == "free_packet")
        return analytic_free_packet(t, {s.initial.center[0], s.initial.width[0], s.initial.momentum[0], s.eta, s.m[0]}, grid);
    if (s.oracle == "harmonic_ground" || s.oracle == "harmonic_coherent") {
        const HarmonicOscillator h{s.potential.omega, s.eta, s.m[0], s.initial.center[0]};
        return analytic_harmonic(t, s.oracle == "harmonic_ground" ? HarmonicMode::ground : HarmonicMode::coherent, h,
                                 grid);
    }
    if (s.oracle == "drift_diffusion") {
        // constant entropic drift b and diffusion σ²/τ per axis: Gaussian moments are exact
        TransitionKernel k(space(), phi, StepParams::from_tau_dt(s.tau, s.step_dt), {});
        std::vector<double> origin(s.dims(), 0.0);
        const auto b = k.forward_drift(origin);
        FieldState st{RealField(grid), RealField(grid, 0.0), t};
        std::vector<double> x(s.dims());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            grid.center(i, x);
            double r = 1.0;
            for (std::size_t a = 0; a < s.dims(); ++a) {
                const double var = s.initial.width[a] * s.initial.width[a] + params.diffusion(a) * t;
                r *= detail::gaussian_pdf(x[a], s.initial.center[a] + b[a] * t, std::sqrt(var));
            }
            st.rho[i] = r;
        }
        return st;
    }
    throw UsageError("unknown oracle '" + s.oracle + "'");
}

namespace scenarios {

namespace detail {

inline ScenarioSpec packet_1d(std::string name, double s0, double k0, double half, std::size_t cells) {
    ScenarioSpec s;
    s.name = std::move(name);
    s.lo = {-half};
    s.hi = {half};
    s.cells = {cells};
    s.initial = {{0.0}, {s0}, {k0}};
    return s;
}

} // namespace detail

inline ScenarioSpec free_packet_1d() {
    auto s = detail::packet_1d("free-packet-1d", 2.0, 0.25, 14.5, 1024);
    s.description = "free Gaussian packet, s0 = 2, k0 = 0.25";
    s.horizon = 2.0;
    s.samples = 20;
    s.oracle = "free_packet";
    return s;
}

inline ScenarioSpec harmonic_ground_1d() {
    auto s = detail::packet_1d("harmonic-ground-1d", std::sqrt(0.5), 0.0, 5.5, 256);
    s.description = "harmonic oscillator ground state, omega = 1";
    s.potential = {"harmonic", 1.0, 0.0, 0.0};
    s.horizon = two_pi;
    s.samples = 16;
    s.oracle = "harmonic_ground";
    return s;
}

inline ScenarioSpec harmonic_coherent_1d() {
    auto s = detail::packet_1d("harmonic-coherent-1d", std::sqrt(0.5), 0.0, 7.5, 512);
    s.description = "coherent state displaced to x0 = 2, three periods";
    s.initial.center = {2.0};
    s.potential = {"harmonic", 1.0, 0.0, 0.0};
    s.horizon = 3.0 * two_pi;
    s.samples = 48;
    s.oracle = "harmonic_coherent";
    return s;
}

inline ScenarioSpec diffusion_only_1d() {
    auto s = detail::packet_1d("diffusion-only-1d", 1.0, 0.0, 12.0, 256);
    s.description = "constant phi field: pure diffusion of a Gaussian";
    s.horizon = 1.0;
    s.samples = 10;
    s.oracle = "drift_diffusion";
    return s;
}

inline ScenarioSpec phi_gradient_1d() {
    auto s = detail::packet_1d("phi-gradient-1d", 1.0, 0.0, 12.0, 256);
    s.description = "phi = exp(x): constant entropic drift -1/2";
    s.phi = {"exp", 1.0, {1.0}};
    s.horizon = 1.0;
    s.samples = 10;
    s.oracle = "drift_diffusion";
    return s;
}

inline ScenarioSpec nonlinear_mu_2m_1d() {
    auto s = detail::packet_1d("nonlinear-mu-2m-1d", 2.0, 0.25, 14.5, 1024);
    s.description = "free packet with osmotic mass 2m";
    s.mu = {2.0};
    s.horizon = 1.0;
    s.samples = 10;
    return s;
}

inline ScenarioSpec two_particle_1d() {
    ScenarioSpec s;
    s.name = "two-particle-1d";
    s.description = "two particles on a line, harmonic trap with spring coupling";
    s.particles = 2;
    s.lo = {-7.0, -7.0};
    s.hi = {7.0, 7.0};
    s.cells = {96, 96};
    s.m = {1.0, 1.0};
    s.mu = {1.0, 1.0};
    s.sigma = {1.0, 1.0};
    s.potential = {"harmonic", 1.0, 0.5, 0.0};
    s.initial = {{0.5, -0.5}, {std::sqrt(0.5), std::sqrt(0.5)}, {0.0, 0.0}};
    s.horizon = 2.0;
    s.samples = 10;
    s.step_dt = 1e-2;
    s.walkers = 20000;
    return s;
}

inline std::vector<ScenarioSpec> all() {
    return {free_packet_1d(),   harmonic_ground_1d(), harmonic_coherent_1d(), diffusion_only_1d(),
            phi_gradient_1d(), nonlinear_mu_2m_1d(), two_particle_1d()};
}

inline ScenarioSpec by_name(const std::string& name) {
    for (auto& s : all())
        if (s.name == name) return s;
    std::string known;
    for (auto& s : all()) known += (known.empty() ? "" : ", ") + s.name;
    throw UsageError("unknown scenario '" + name + "' (known: " + known + ")");
}

} // namespace scenarios

/// Summary of one density (and, when present, its phase) at one time.
struct Observables {
    double t = 0.0;
    double norm = 0.0;
    double energy = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> mean;
    std::vector<double> variance;
    double boundary_mass = 0.0;   ///< mass in the outer 5% of cells along any axis
    double min_rho = 0.0;
};

inline Observables density_observables(const RealField& rho, double t) {
    const auto& grid = rho.spec;
    const std::size_t D = grid.dims();
    Observables o;
    o.t = t;
    o.mean.assign(D, 0.0);
    o.variance.assign(D, 0.0);
    o.min_rho = std::numeric_limits<double>::infinity();
    std::vector<double> x(D);
    std::vector<std::size_t> edge(D);
    for (std::size_t a = 0; a < D; ++a) edge[a] = std::max<std::size_t>(1, grid.axis(a).n / 20);
    double mass = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = rho[i];
        mass += r;
        o.min_rho = std::min(o.min_rho, r);
        grid.center(i, x);
        for (std::size_t a = 0; a < D; ++a) o.mean[a] += r * x[a];
        bool outer = false;
        for (std::size_t a = 0; a < D && !outer; ++a) {
            const std::size_t c = grid.coord(i, a);
            outer = c < edge[a] || c >= grid.axis(a).n - edge[a];
        }
        if (outer) o.boundary_mass += r;
    }
    const double dv = grid.cell_volume();
    o.norm = mass * dv;
    for (std::size_t a = 0; a < D; ++a) o.mean[a] /= mass;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid.center(i, x);
        for (std::size_t a = 0; a < D; ++a) o.variance[a] += rho[i] * (x[a] - o.mean[a]) * (x[a] - o.mean[a]);
    }
    for (std::size_t a = 0; a < D; ++a) o.variance[a] /= mass;
    o.boundary_mass *= dv;
    return o;
}

inline Observables observables(const FieldState& state, const ModelParams& params) {
    auto o = density_observables(state.rho, state.t);
    o.energy = energy(state, params);
    return o;
}

inline Observables observables(const WaveFunction& wave, const ModelParams& params) {
    RealField rho(wave.psi.spec);
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::norm(wave.psi[i]);
    auto o = density_observables(rho, wave.t);
    o.energy = energy(wave, params);
    return o;
}

namespace detail {

inline void check_same_grid(const RealField& a, const RealField& b) {
    if (!(a.spec == b.spec)) throw UsageError("densities live on different grids");
}

} // namespace detail

inline double l1_distance(const RealField& a, const RealField& b) {
    detail::check_same_grid(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s * a.spec.cell_volume();
}

inline double l2_distance(const RealField& a, const RealField& b) {
    detail::check_same_grid(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s * a.spec.cell_volume());
}

struct KlDivergence {
    double value = 0.0;
    bool support_mismatch = false;
};

/// KL(p‖q) = Σ p log(p/q) ΔV; infinite, with the flag set, where p > 0 and q = 0.
inline KlDivergence kl_divergence(const RealField& p, const RealField& q) {
    detail::check_same_grid(p, q);
    KlDivergence out;
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) {
            out.support_mismatch = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
        s += p[i] * std::log(p[i] / q[i]);
    }
    out.value = s * p.spec.cell_volume();
    return out;
}

inline RealField density_of(const WaveFunction& w) {
    RealField rho(w.psi.spec);
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::norm(w.psi[i]);
    return rho;
}

/// Sums fine cells into blocks of `factor` cells per axis (mass-preserving coarsening).
inline RealField coarsen(const RealField& f, std::size_t factor) {
    const auto& g = f.spec;
    std::vector<Axis> axes;
    for (std::size_t a = 0; a < g.dims(); ++a) {
        if (g.axis(a).n % factor != 0) throw UsageError("coarsening factor must divide every axis");
        axes.push_back({g.axis(a).lo, g.axis(a).hi, g.axis(a).n / factor});
    }
    GridSpec cg(axes, g.boundary());
    RealField out(cg, 0.0);
    const double ratio = g.cell_volume() / cg.cell_volume();
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::size_t j = 0;
        for (std::size_t a = 0; a < g.dims(); ++a) j += (g.coord(i, a) / factor) * cg.stride(a);
        out[j] += f[i] * ratio;
    }
    return out;
}

} // namespace entropic
