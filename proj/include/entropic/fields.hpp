#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entropic/kernel.hpp"

namespace entropic {

using cplx = std::complex<double>;

/// Physical constants per particle plus the shared η, τ. Inertial and osmotic masses
/// follow from A and B as m_n = 2A/σ_n², μ_n = 2B/σ_n², so σ_n²/τ = η/m_n and μ_n/m_n
/// is the same for every particle.
struct ModelParams {
    std::size_t d = 1;
    std::size_t particles = 1;
    std::vector<double> m{1.0};
    std::vector<double> mu{1.0};
    std::vector<double> sigma{1.0};
    double eta = 1.0;
    double tau = 1.0;
    ScalarField potential;   ///< V(x); zero when empty

    /// σ = τ = m = μ = η = 1.
    static ModelParams natural(std::size_t d = 1, std::size_t particles = 1) {
        ModelParams p;
        p.d = d;
        p.particles = particles;
        p.m.assign(particles, 1.0);
        p.mu.assign(particles, 1.0);
        p.sigma.assign(particles, 1.0);
        return p;
    }

    std::size_t dims() const noexcept { return d * particles; }
    std::size_t particle_of(std::size_t axis) const { return axis / d; }
    double mass(std::size_t axis) const { return m.at(particle_of(axis)); }
    double osmotic_mass(std::size_t axis) const { return mu.at(particle_of(axis)); }
    /// η/m_A = σ_A²/τ.
    double diffusion(std::size_t axis) const { return eta / mass(axis); }
    double A(std::size_t n) const { return 0.5 * m.at(n) * sigma.at(n) * sigma.at(n); }
    double B(std::size_t n) const { return 0.5 * mu.at(n) * sigma.at(n) * sigma.at(n); }
    bool linear() const {
        for (std::size_t n = 0; n < particles; ++n)
            if (mu[n] != m[n]) return false;
        return true;
    }

    ConfigurationSpace space() const { return ConfigurationSpace(d, particles, sigma); }

    void validate() const {
        if (m.size() != particles || mu.size() != particles || sigma.size() != particles)
            throw UsageError("model parameters need one m, mu and sigma per particle");
        if (!(eta > 0.0) || !(tau > 0.0)) throw DomainError("eta and tau must be positive");
        for (std::size_t n = 0; n < particles; ++n) {
            if (!(m[n] > 0.0) || !(sigma[n] > 0.0) || !(mu[n] >= 0.0))
                throw DomainError("masses and sigma must be positive (mu non-negative)");
            const double lhs = sigma[n] * sigma[n] / tau, rhs = eta / m[n];
            if (std::abs(lhs - rhs) > 1e-12 * std::max(std::abs(lhs), std::abs(rhs)))
                throw DomainError("sigma^2/tau must equal eta/m (particle " + std::to_string(n) + ")");
            if (std::abs(mu[n] / m[n] - mu[0] / m[0]) > 1e-12 * (mu[0] / m[0] + 1e-300))
                throw DomainError("osmotic to inertial mass ratio must be the same for every particle");
        }
    }

    RealField potential_on(const GridSpec& grid) const {
        if (!potential) return RealField(grid, 0.0);
        return potential.sample_on(grid);
    }
};

/// (ρ, φ) on a grid at one instant.
struct FieldState {
    RealField rho;
    RealField phi;
    double t = 0.0;
};

struct WaveFunction {
    ComplexField psi;
    double t = 0.0;
};

inline constexpr double default_rho_floor = 1e-12;

/// Current, osmotic and drift velocities; `masked` marks cells with ρ below the floor.
struct Velocities {
    std::vector<RealField> b, bstar, v, u;
    std::vector<std::uint8_t> masked;
};

namespace detail {

inline RealField safe_log(const RealField& rho) {
    RealField out(rho.spec);
    for (std::size_t i = 0; i < rho.size(); ++i)
        out[i] = std::log(std::max(rho[i], std::numeric_limits<double>::min()));
    return out;
}

inline void check_state(const FieldState& s, const ModelParams& p) {
    if (s.rho.spec.dims() != p.dims() || !(s.rho.spec == s.phi.spec))
        throw UsageError("field state grids do not match the model dimension");
}

} // namespace detail

/// v = (η/m)∂φ, u = -(η/2m)∂ log ρ, b = v - u, b* = v + u.
inline Velocities velocities(const FieldState& state, const ModelParams& params, double floor = default_rho_floor) {
    detail::check_state(state, params);
    const auto& grid = state.rho.spec;
    const bool periodic = grid.boundary() == Boundary::periodic;
    const auto log_rho = detail::safe_log(state.rho);
    Velocities out;
    out.masked.assign(grid.size(), 0);
    for (std::size_t i = 0; i < grid.size(); ++i) out.masked[i] = state.rho[i] < floor ? 1 : 0;
    for (std::size_t a = 0; a < params.dims(); ++a) {
        const double k = params.diffusion(a);
        RealField v = periodic ? phase_derivative(state.phi, a) : derivative(state.phi, a);
        RealField u = derivative(log_rho, a);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (out.masked[i]) {
                v[i] = u[i] = 0.0;
                continue;
            }
            v[i] *= k;
            u[i] *= -0.5 * k;
        }
        RealField b(grid), bs(grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            b[i] = v[i] - u[i];
            bs[i] = v[i] + u[i];
        }
        out.v.push_back(std::move(v));
        out.u.push_back(std::move(u));
        out.b.push_back(std::move(b));
        out.bstar.push_back(std::move(bs));
    }
    return out;
}

/// Entropic drift b = (σ²/τ)∂S sampled at the grid's cell centres.
inline std::vector<RealField> drift_field(const TransitionKernel& kernel, const GridSpec& grid) {
    std::vector<RealField> b(kernel.dims(), RealField(grid));
    std::vector<double> x(grid.dims());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid.center(i, x);
        const auto bi = kernel.forward_drift(x);
        for (std::size_t a = 0; a < b.size(); ++a) b[a][i] = bi[a];
    }
    return b;
}

/// Largest stable explicit Fokker-Planck step, c·min_A Δx_A² τ/σ_A².
inline double fokker_planck_dt_limit(const GridSpec& grid, const ModelParams& params, double c = 0.25) {
    double lim = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < grid.dims(); ++a) {
        const double dx = grid.axis(a).spacing();
        lim = std::min(lim, c * dx * dx / params.diffusion(a));
    }
    return lim;
}

/// One explicit conservative step of ∂ρ/∂t = -∂_A(b^A ρ) + (σ_A²/2τ) ∂_A² ρ. Face fluxes
/// vanish at Dirichlet walls, so Σρ is preserved to rounding.
inline RealField fokker_planck_step(const RealField& rho, const std::vector<RealField>& b, const ModelParams& params,
                                    double dt, double c = 0.25) {
    const auto& grid = rho.spec;
    if (b.size() != grid.dims() || grid.dims() != params.dims()) throw UsageError("drift field dimension mismatch");
    if (!(dt > 0.0) || dt > fokker_planck_dt_limit(grid, params, c) * (1.0 + 1e-12))
        throw ConfigError("Fokker-Planck step dt=" + csv::format(dt) + " violates the stability bound " +
                          csv::format(fokker_planck_dt_limit(grid, params, c)));
    RealField out = rho;
    const bool periodic = grid.boundary() == Boundary::periodic;
    for (std::size_t a = 0; a < grid.dims(); ++a) {
        const double dx = grid.axis(a).spacing();
        const double diff = 0.5 * params.diffusion(a);
        const std::size_t n = grid.axis(a).n, s = grid.stride(a);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const std::size_t c_i = grid.coord(i, a);
            if (c_i + 1 == n && !periodic) continue;
            const std::size_t j = c_i + 1 == n ? i - (n - 1) * s : i + s;
            const double bface = 0.5 * (b[a][i] + b[a][j]);
            if (std::abs(bface) * dt > dx)
                throw ConfigError("Fokker-Planck step violates the advective bound |b| dt <= dx");
            const double flux = bface * 0.5 * (rho[i] + rho[j]) - diff * (rho[j] - rho[i]) / dx;
            const double delta = dt * flux / dx;
            out[i] -= delta;
            out[j] += delta;
        }
    }
    return out;
}

namespace detail {

inline double osmotic_factor(const ModelParams& p, std::size_t a) {
    // μη/(2m²), multiplying Q_A = ∂²_A h + (∂_A h)², h = log ρ^{1/2}
    return p.osmotic_mass(a) * p.eta / (2.0 * p.mass(a) * p.mass(a));
}

} // namespace detail

/// E = ∫ρ[(η²/2m)(∂φ)² + (μη²/8m²)(∂ log ρ)² + V] by the midpoint rule, summed per axis
/// with that axis's masses. Cells below the floor contribute only ρV.
inline double energy(const FieldState& state, const ModelParams& params, double floor = default_rho_floor) {
    detail::check_state(state, params);
    const auto& grid = state.rho.spec;
    const bool periodic = grid.boundary() == Boundary::periodic;
    const auto log_rho = detail::safe_log(state.rho);
    const auto V = params.potential_on(grid);
    std::vector<double> density(grid.size(), 0.0);
    for (std::size_t a = 0; a < params.dims(); ++a) {
        const auto dphi = periodic ? phase_derivative(state.phi, a) : derivative(state.phi, a);
        const auto dlog = derivative(log_rho, a);
        const double m = params.mass(a), mu = params.osmotic_mass(a), eta = params.eta;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (state.rho[i] < floor) continue;
            density[i] += eta * eta / (2.0 * m) * dphi[i] * dphi[i] + mu * eta * eta / (8.0 * m * m) * dlog[i] * dlog[i];
        }
    }
    double e = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) e += state.rho[i] * (density[i] + V[i]);
    return e * grid.cell_volume();
}

/// Same functional written in Ψ: (η²/2m)|∂Ψ|² + ((μ-m)η²/2m²)(∂|Ψ|)² + V|Ψ|².
inline double energy(const WaveFunction& wave, const ModelParams& params) {
    const auto& grid = wave.psi.spec;
    if (grid.dims() != params.dims()) throw UsageError("wave function grid does not match the model dimension");
    RealField amp(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) amp[i] = std::abs(wave.psi[i]);
    const auto V = params.potential_on(grid);
    double e = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) e += V[i] * std::norm(wave.psi[i]);
    for (std::size_t a = 0; a < params.dims(); ++a) {
        const auto dpsi = derivative(wave.psi, a);
        const auto damp = derivative(amp, a);
        const double m = params.mass(a), mu = params.osmotic_mass(a), eta = params.eta;
        for (std::size_t i = 0; i < grid.size(); ++i)
            e += eta * eta / (2.0 * m) * std::norm(dpsi[i]) + (mu - m) * eta * eta / (2.0 * m * m) * damp[i] * damp[i];
    }
    return e * grid.cell_volume();
}

/// The osmotic ("quantum potential") term (μη²/2m²) ∇²ρ^{1/2}/ρ^{1/2}, evaluated as
/// Σ_A (μη²/2m²)[∂²_A h + (∂_A h)²] with h = log ρ^{1/2}.
inline RealField osmotic_term(const RealField& rho, const ModelParams& params) {
    const auto& grid = rho.spec;
    RealField h = detail::safe_log(rho);
    for (auto& v : h.values) v *= 0.5;
    RealField q(grid, 0.0);
    for (std::size_t a = 0; a < params.dims(); ++a) {
        const auto dh = derivative(h, a);
        const auto d2h = second_derivative(h, a);
        const double c = detail::osmotic_factor(params, a) * params.eta;
        for (std::size_t i = 0; i < grid.size(); ++i) q[i] += c * (d2h[i] + dh[i] * dh[i]);
    }
    return q;
}

struct MadelungOptions {
    double stability = 0.25;   ///< dt ≤ stability · Δx² m/η
    double max_renorm = 1e-6;  ///< allowed |factor - 1| per step
    double rho_floor = default_rho_floor;
    double filter = 0.05;      ///< fourth-difference damping rate, in units of (η/m)/Δx²
};

namespace detail {

/// Cells with log ρ below the floor are rebuilt by quadratic extrapolation, line by
/// line along each axis in turn, from the outermost three known cells. A masked cell
/// enclosed by known cells on some line is a node and is returned.
inline std::optional<std::size_t> extrapolate_masked(RealField& l, RealField& ph, double log_floor) {
    const auto& grid = l.spec;
    std::vector<std::uint8_t> known(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) known[i] = l[i] >= log_floor ? 1 : 0;
    std::vector<std::size_t> line;
    for (std::size_t a = 0; a < grid.dims(); ++a) {
        const std::size_t n = grid.axis(a).n, st = grid.stride(a);
        line.resize(n);
        for (std::size_t start = 0; start < grid.size(); ++start) {
            if (grid.coord(start, a) != 0) continue;
            std::size_t first = n, last = 0, count = 0;
            for (std::size_t j = 0; j < n; ++j) {
                line[j] = start + j * st;
                if (!known[line[j]]) continue;
                first = std::min(first, j);
                last = j;
                ++count;
            }
            if (count < 3) continue;
            if (count != last - first + 1) {
                for (std::size_t j = first; j <= last; ++j)
                    if (!known[line[j]]) return line[j];
            }
            if (last - first < 2) continue;
            // stencil spread over the known run keeps edge noise from being amplified
            const std::size_t p = std::max<std::size_t>(1, (last - first) / 4);
            auto fill = [&](std::size_t j0, int dir) {
                // known values at j0, j0+p·dir, j0+2p·dir; target at j0 - k·dir
                const std::size_t i0 = line[j0];
                const std::size_t i1 = line[dir > 0 ? j0 + p : j0 - p];
                const std::size_t i2 = line[dir > 0 ? j0 + 2 * p : j0 - 2 * p];
                auto at = [&](const RealField& f, double k) {
                    const double u = k / static_cast<double>(p);
                    return f[i0] + u * (1.5 * f[i0] - 2.0 * f[i1] + 0.5 * f[i2]) +
                           0.5 * u * u * (f[i0] - 2.0 * f[i1] + f[i2]);
                };
                for (std::size_t k = 1;; ++k) {
                    if (dir > 0 && k > j0) break;
                    if (dir < 0 && j0 + k >= n) break;
                    const std::size_t j = dir > 0 ? j0 - k : j0 + k;
                    l[line[j]] = at(l, static_cast<double>(k));
                    ph[line[j]] = at(ph, static_cast<double>(k));
                    known[line[j]] = 1;
                }
            };
            fill(first, +1);
            fill(last, -1);
        }
    }
    return std::nullopt;
}

/// f ← f - ε δ⁴f along each axis, ghosts by quadratic extrapolation. Cubics are left
/// untouched; the odd-even mode that central differences cannot see is damped.
inline void fourth_difference_filter(RealField& f, std::size_t a, double eps) {
    const auto& grid = f.spec;
    const std::size_t n = grid.axis(a).n, st = grid.stride(a);
    std::vector<double> line(n + 4), out(n);
    for (std::size_t start = 0; start < grid.size(); ++start) {
        if (grid.coord(start, a) != 0) continue;
        for (std::size_t j = 0; j < n; ++j) line[j + 2] = f[start + j * st];
        line[1] = 3.0 * line[2] - 3.0 * line[3] + line[4];
        line[0] = 3.0 * line[1] - 3.0 * line[2] + line[3];
        line[n + 2] = 3.0 * line[n + 1] - 3.0 * line[n] + line[n - 1];
        line[n + 3] = 3.0 * line[n + 2] - 3.0 * line[n + 1] + line[n];
        for (std::size_t j = 0; j < n; ++j)
            out[j] = line[j + 2] -
                     eps * (line[j] - 4.0 * line[j + 1] + 6.0 * line[j + 2] - 4.0 * line[j + 3] + line[j + 4]);
        for (std::size_t j = 0; j < n; ++j) f[start + j * st] = out[j];
    }
}

} // namespace detail

/// RK4 integrator for the coupled (ρ, φ) system
///   ∂ρ/∂t = -(η/m)(∂ρ·∂φ + ρ∇²φ)
///   η ∂φ/∂t = -(η²/2m)(∂φ)² - V + (μη²/2m²) ∇²ρ^{1/2}/ρ^{1/2}.
/// The density is carried as log ρ, which keeps the osmotic term finite in far tails and
/// makes Gaussian data (quadratic log ρ and φ) exact under the central stencils.
class MadelungSolver {
public:
    MadelungSolver(const FieldState& initial, ModelParams params, MadelungOptions opts = {})
        : params_(std::move(params)), opts_(opts), log_rho_(initial.rho.spec), phi_(initial.phi), t_(initial.t) {
        detail::check_state(initial, params_);
        params_.validate();
        if (initial.rho.spec.boundary() != Boundary::dirichlet_zero)
            throw UsageError("Madelung solver supports Dirichlet grids only");
        for (std::size_t i = 0; i < log_rho_.size(); ++i) {
            const double r = initial.rho[i];
            if (!(r > 0.0) || !std::isfinite(r))
                throw SolverError("density has a node (rho = " + csv::format(r) + ")", i, t_);
            log_rho_[i] = std::log(r);
        }
        V_ = params_.potential_on(log_rho_.spec);
        renormalize();
    }

    double dt_limit() const {
        double lim = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < params_.dims(); ++a) {
            const double dx = log_rho_.spec.axis(a).spacing();
            lim = std::min(lim, opts_.stability * dx * dx * params_.mass(a) / params_.eta);
        }
        return lim;
    }

    void step(double dt) {
        if (!(dt > 0.0) || dt > dt_limit() * (1.0 + 1e-12))
            throw ConfigError("Madelung step dt=" + csv::format(dt) + " violates the stability bound " +
                              csv::format(dt_limit()));
        const auto& grid = log_rho_.spec;
        const std::size_t n = grid.size();
        RealField k1l(grid), k1p(grid), k2l(grid), k2p(grid), k3l(grid), k3p(grid), k4l(grid), k4p(grid);
        RealField tl(grid), tp(grid);
        rhs(log_rho_, phi_, k1l, k1p);
        for (std::size_t i = 0; i < n; ++i) {
            tl[i] = log_rho_[i] + 0.5 * dt * k1l[i];
            tp[i] = phi_[i] + 0.5 * dt * k1p[i];
        }
        rhs(tl, tp, k2l, k2p);
        for (std::size_t i = 0; i < n; ++i) {
            tl[i] = log_rho_[i] + 0.5 * dt * k2l[i];
            tp[i] = phi_[i] + 0.5 * dt * k2p[i];
        }
        rhs(tl, tp, k3l, k3p);
        for (std::size_t i = 0; i < n; ++i) {
            tl[i] = log_rho_[i] + dt * k3l[i];
            tp[i] = phi_[i] + dt * k3p[i];
        }
        rhs(tl, tp, k4l, k4p);
        for (std::size_t i = 0; i < n; ++i) {
            log_rho_[i] += dt / 6.0 * (k1l[i] + 2.0 * k2l[i] + 2.0 * k3l[i] + k4l[i]);
            phi_[i] += dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
        }
        t_ += dt;
        if (opts_.filter > 0.0) {
            for (std::size_t a = 0; a < params_.dims(); ++a) {
                const double h = grid.axis(a).spacing();
                const double eps = std::min(1.0 / 16.0, opts_.filter * dt * params_.diffusion(a) / (h * h));
                detail::fourth_difference_filter(log_rho_, a, eps);
                detail::fourth_difference_filter(phi_, a, eps);
            }
        }
        if (auto node = detail::extrapolate_masked(log_rho_, phi_, std::log(opts_.rho_floor)))
            throw SolverError("density fell below the floor inside its support (node)", *node, t_);
        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(log_rho_[i]) || !std::isfinite(phi_[i]))
                throw SolverError("Madelung state became non-finite", i, t_);
        renormalize();
        if (std::abs(last_renorm_ - 1.0) > opts_.max_renorm)
            throw ConservationError("density renormalisation factor " + csv::format(last_renorm_) +
                                    " exceeds the per-step limit at t=" + csv::format(t_));
    }

    FieldState state() const {
        FieldState s{RealField(log_rho_.spec), phi_, t_};
        for (std::size_t i = 0; i < s.rho.size(); ++i) s.rho[i] = std::exp(log_rho_[i]);
        return s;
    }

    double t() const noexcept { return t_; }
    const RealField& log_rho() const noexcept { return log_rho_; }
    const RealField& phi() const noexcept { return phi_; }
    const ModelParams& params() const noexcept { return params_; }
    double last_renorm() const noexcept { return last_renorm_; }
    double max_renorm_deviation() const noexcept { return max_renorm_dev_; }

private:
    void rhs(const RealField& l, const RealField& ph, RealField& dl, RealField& dph) const {
        const auto& grid = l.spec;
        const std::size_t n = grid.size();
        for (std::size_t i = 0; i < n; ++i) {
            dl[i] = 0.0;
            dph[i] = -V_[i] / params_.eta;
        }
        for (std::size_t a = 0; a < params_.dims(); ++a) {
            const double h = grid.axis(a).spacing();
            const double k = params_.diffusion(a);
            const double q = detail::osmotic_factor(params_, a);
            for (std::size_t i = 0; i < n; ++i) {
                double ll, lr, pl, pr;
                detail::neighbours(l, i, a, ll, lr);
                detail::neighbours(ph, i, a, pl, pr);
                const double dlog = (lr - ll) / (2.0 * h);
                const double d2log = (lr - 2.0 * l[i] + ll) / (h * h);
                const double dp = (pr - pl) / (2.0 * h);
                const double d2p = (pr - 2.0 * ph[i] + pl) / (h * h);
                dl[i] -= k * (dlog * dp + d2p);
                // h = log ρ / 2: ∂²h + (∂h)² = d2log/2 + dlog²/4
                dph[i] += -0.5 * k * dp * dp + q * (0.5 * d2log + 0.25 * dlog * dlog);
            }
        }
    }

    void renormalize() {
        double mass = 0.0;
        for (double v : log_rho_.values) mass += std::exp(v);
        mass *= log_rho_.spec.cell_volume();
        if (!(mass > 0.0) || !std::isfinite(mass)) throw SolverError("density mass is not finite", 0, t_);
        const double shift = std::log(mass);
        for (auto& v : log_rho_.values) v -= shift;
        last_renorm_ = mass;
        max_renorm_dev_ = std::max(max_renorm_dev_, std::abs(mass - 1.0));
    }

    ModelParams params_;
    MadelungOptions opts_;
    RealField log_rho_;
    RealField phi_;
    RealField V_;
    double t_ = 0.0;
    double last_renorm_ = 1.0;
    double max_renorm_dev_ = 0.0;
};

/// One RK4 step of the Madelung system from a (ρ, φ) state.
inline FieldState madelung_step(const FieldState& state, const ModelParams& params, double dt,
                                MadelungOptions opts = {}) {
    MadelungSolver solver(state, params, opts);
    solver.step(dt);
    return solver.state();
}

namespace detail {

/// Solves the tridiagonal system lower·x_{i-1} + diag_i·x_i + upper·x_{i+1} = rhs_i
/// in place (Thomas algorithm); `diag` is overwritten.
inline void thomas(cplx lower, std::vector<cplx>& diag, cplx upper, std::vector<cplx>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(diag[i - 1]) == 0.0) throw NumericalError("Crank-Nicolson tridiagonal solve hit a zero pivot");
        const cplx w = lower / diag[i - 1];
        diag[i] -= w * upper;
        rhs[i] -= w * rhs[i - 1];
    }
    if (std::abs(diag[n - 1]) == 0.0) throw NumericalError("Crank-Nicolson tridiagonal solve hit a zero pivot");
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper * rhs[i + 1]) / diag[i];
    for (const auto& v : rhs)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw NumericalError("Crank-Nicolson tridiagonal solve produced non-finite values");
}

/// Crank-Nicolson update along axis a for H_a = -(η²/2m)∂²_a + V·share, Dirichlet-zero walls.
inline void cn_axis(ComplexField& psi, const RealField& V, double share, const ModelParams& p, std::size_t a,
                    double dt) {
    const auto& grid = psi.spec;
    const std::size_t n = grid.axis(a).n, s = grid.stride(a);
    const double h = grid.axis(a).spacing();
    const double kin = p.eta * p.eta / (2.0 * p.mass(a) * h * h);
    const cplx beta(0.0, dt / (2.0 * p.eta));
    const cplx off = -beta * kin;   // β·H_{i,i±1}, H_off = -kin
    std::vector<cplx> diag(n), rhs(n);
    std::vector<std::size_t> line(n);
    for (std::size_t start = 0; start < grid.size(); ++start) {
        if (grid.coord(start, a) != 0) continue;
        for (std::size_t i = 0; i < n; ++i) line[i] = start + i * s;
        for (std::size_t i = 0; i < n; ++i) {
            const double hii = 2.0 * kin + share * V[line[i]];
            diag[i] = 1.0 + beta * hii;
            cplx r = (1.0 - beta * hii) * psi[line[i]];
            if (i > 0) r -= off * psi[line[i - 1]];
            if (i + 1 < n) r -= off * psi[line[i + 1]];
            rhs[i] = r;
        }
        thomas(off, diag, off, rhs);
        for (std::size_t i = 0; i < n; ++i) psi[line[i]] = rhs[i];
    }
}

} // namespace detail

/// Crank-Nicolson step of iη∂Ψ/∂t = -(η²/2m)∇²Ψ + VΨ; Strang dimension splitting for
/// D = 2, 3 with V shared equally between the axis operators. Each factor is unitary.
inline void schrodinger_step(WaveFunction& wave, const ModelParams& params, double dt, const RealField* V = nullptr) {
    const auto& grid = wave.psi.spec;
    const std::size_t D = grid.dims();
    if (D != params.dims()) throw UsageError("wave function grid does not match the model dimension");
    if (D > 3) throw UsageError("grid solvers are limited to D <= 3");
    if (grid.boundary() != Boundary::dirichlet_zero) throw UsageError("Crank-Nicolson solver supports Dirichlet grids only");
    RealField local;
    if (!V) {
        local = params.potential_on(grid);
        V = &local;
    }
    const double share = 1.0 / static_cast<double>(D);
    if (D == 1) {
        detail::cn_axis(wave.psi, *V, share, params, 0, dt);
    } else {
        for (std::size_t a = 0; a + 1 < D; ++a) detail::cn_axis(wave.psi, *V, share, params, a, 0.5 * dt);
        detail::cn_axis(wave.psi, *V, share, params, D - 1, dt);
        for (std::size_t a = D - 1; a-- > 0;) detail::cn_axis(wave.psi, *V, share, params, a, 0.5 * dt);
    }
    wave.t += dt;
}

namespace detail {

/// ψ ← ψ·exp(-i dt Q/η) with Q = Σ_A (η²/2m)(1 - μ/m) ∂²_A|Ψ| / |Ψ|; cells with |Ψ|² below
/// the floor are left untouched.
inline void nonlinear_phase(WaveFunction& wave, const ModelParams& p, double dt, double floor) {
    const auto& grid = wave.psi.spec;
    RealField h(grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        h[i] = std::log(std::max(std::abs(wave.psi[i]), std::numeric_limits<double>::min()));
    RealField q(grid, 0.0);
    for (std::size_t a = 0; a < p.dims(); ++a) {
        const double c = p.eta * p.eta / (2.0 * p.mass(a)) * (1.0 - p.osmotic_mass(a) / p.mass(a));
        if (c == 0.0) continue;
        const auto dh = derivative(h, a);
        const auto d2h = second_derivative(h, a);
        for (std::size_t i = 0; i < grid.size(); ++i) q[i] += c * (d2h[i] + dh[i] * dh[i]);
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::norm(wave.psi[i]) < floor) continue;
        wave.psi[i] *= std::polar(1.0, -dt * q[i] / p.eta);
    }
}

} // namespace detail

/// Largest stable step for the explicit nonlinear phase update,
/// c·min_A Δx_A² m/(η|1 - μ/m|); unbounded when μ = m.
inline double nonlinear_dt_limit(const GridSpec& grid, const ModelParams& params, double c = 0.5) {
    double lim = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < grid.dims(); ++a) {
        const double r = std::abs(1.0 - params.osmotic_mass(a) / params.mass(a));
        if (r == 0.0) continue;
        const double dx = grid.axis(a).spacing();
        lim = std::min(lim, c * dx * dx * params.mass(a) / (params.eta * r));
    }
    return lim;
}

/// Strang split step of iη∂Ψ/∂t = -(η²/2m)∇²Ψ + VΨ + (η²/2m)(1 - μ/m)(∇²|Ψ|/|Ψ|)Ψ:
/// half nonlinear phase, full Crank-Nicolson step, half nonlinear phase. With μ = m the
/// phase factors are skipped and the result is bit-identical to schrodinger_step.
inline void nonlinear_schrodinger_step(WaveFunction& wave, const ModelParams& params, double dt,
                                       const RealField* V = nullptr, double floor = default_rho_floor) {
    const bool active = !params.linear();
    if (active && dt > nonlinear_dt_limit(wave.psi.spec, params) * (1.0 + 1e-12))
        throw ConfigError("nonlinear step dt=" + csv::format(dt) + " violates the stability bound " +
                          csv::format(nonlinear_dt_limit(wave.psi.spec, params)));
    if (active) detail::nonlinear_phase(wave, params, 0.5 * dt, floor);
    schrodinger_step(wave, params, dt, V);
    if (active) detail::nonlinear_phase(wave, params, 0.5 * dt, floor);
}

/// Regraduation (η, τ, φ, μ) → (η/κ, κτ, κφ, μκ²); m, ρ and V are unchanged.
inline ModelParams regraduate(const ModelParams& params, double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw UsageError("regraduation factor kappa must be positive");
    ModelParams out = params;
    out.eta = params.eta / kappa;
    out.tau = params.tau * kappa;
    for (auto& mu : out.mu) mu *= kappa * kappa;
    return out;
}

inline FieldState regraduate(const FieldState& state, double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw UsageError("regraduation factor kappa must be positive");
    FieldState out = state;
    for (auto& v : out.phi.values) v *= kappa;
    return out;
}

inline std::pair<ModelParams, FieldState> regraduate(const ModelParams& params, const FieldState& state,
                                                     double kappa) {
    return {regraduate(params, kappa), regraduate(state, kappa)};
}

/// κ = (A/B)^{1/2} = (m/μ)^{1/2}, the choice that makes the regraduated osmotic mass equal m.
inline double linearizing_kappa(const ModelParams& params) {
    if (!(params.mu.at(0) > 0.0)) throw DomainError("linearising regraduation needs a positive osmotic mass");
    return std::sqrt(params.m[0] / params.mu[0]);
}

/// Ψ = ρ^{1/2} e^{iφ}.
inline WaveFunction wavefunction_from_fields(const FieldState& state) {
    WaveFunction w{ComplexField(state.rho.spec), state.t};
    for (std::size_t i = 0; i < state.rho.size(); ++i)
        w.psi[i] = std::polar(std::sqrt(std::max(state.rho[i], 0.0)), state.phi[i]);
    return w;
}

/// ρ^{(1-i)/2} e^{iS}: equals ρ^{1/2}e^{iφ} when φ = S - log ρ^{1/2}.
inline ComplexField statistical_wavefunction(const RealField& rho, const RealField& entropy) {
    if (!(rho.spec == entropy.spec)) throw UsageError("density and entropy grids differ");
    ComplexField out(rho.spec);
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const double r = rho[i];
        if (!(r > 0.0)) throw DomainError("statistical decomposition needs rho > 0");
        out[i] = std::pow(cplx(r, 0.0), cplx(0.5, -0.5)) * std::polar(1.0, entropy[i]);
    }
    return out;
}

/// ρ = |Ψ|² and φ = unwrapped arg Ψ, swept outward from the domain centre one axis at a
/// time. A run of cells below the floor that is followed by support again is a node and
/// raises DomainError naming those cells; tails that stay below the floor are fine.
inline FieldState fields_from_wavefunction(const WaveFunction& wave, double floor = default_rho_floor) {
    const auto& grid = wave.psi.spec;
    const std::size_t D = grid.dims();
    FieldState s{RealField(grid), RealField(grid), wave.t};
    std::vector<double> raw(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        s.rho[i] = std::norm(wave.psi[i]);
        raw[i] = std::arg(wave.psi[i]);
    }
    std::vector<std::size_t> center(D);
    std::size_t center_flat = 0;
    for (std::size_t k = 0; k < D; ++k) {
        center[k] = grid.axis(k).n / 2;
        center_flat += center[k] * grid.stride(k);
    }
    s.phi[center_flat] = raw[center_flat];
    std::vector<std::size_t> nodes, gap;
    for (std::size_t k = 0; k < D; ++k) {
        const std::size_t n = grid.axis(k).n, st = grid.stride(k);
        for (std::size_t start = 0; start < grid.size(); ++start) {
            bool seed = grid.coord(start, k) == center[k];
            for (std::size_t j = k + 1; j < D && seed; ++j) seed = grid.coord(start, j) == center[j];
            if (!seed) continue;
            for (int dir : {+1, -1}) {
                gap.clear();
                bool in_gap = s.rho[start] < floor;
                std::size_t prev = start;
                for (std::size_t c = center[k];;) {
                    if (dir > 0 && c + 1 >= n) break;
                    if (dir < 0 && c == 0) break;
                    c = dir > 0 ? c + 1 : c - 1;
                    const std::size_t cur = dir > 0 ? prev + st : prev - st;
                    s.phi[cur] = s.phi[prev] + detail::wrap_phase(raw[cur] - raw[prev]);
                    if (s.rho[cur] < floor) {
                        in_gap = true;
                        gap.push_back(cur);
                    } else if (in_gap) {
                        nodes.insert(nodes.end(), gap.begin(), gap.end());
                        gap.clear();
                        in_gap = false;
                    }
                    prev = cur;
                }
            }
        }
    }
    if (!nodes.empty()) {
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        std::string msg = "wave function has " + std::to_string(nodes.size()) + " node cell(s):";
        for (std::size_t i = 0; i < nodes.size() && i < 20; ++i) msg += " " + std::to_string(nodes[i]);
        if (nodes.size() > 20) msg += " ...";
        throw DomainError(msg);
    }
    return s;
}

/// Three consecutive Madelung states (t-h, t, t+h) run with a given η.
struct ClassicalLimitSample {
    ModelParams params;
    FieldState before, at, after;
};

struct ClassicalLimitReport {
    std::vector<double> eta;
    std::vector<double> residual;    ///< ρ-weighted L2 norm of ∂S_J/∂t + (∂S_J)²/2m + V
    std::vector<double> osmotic;     ///< ρ-weighted L2 norm of the μ-term
    std::vector<double> mismatch;    ///< ρ-weighted L2 norm of residual minus μ-term
    double slope = 0.0;              ///< fitted d log(residual) / d log η
};

/// Hamilton-Jacobi residual of each sample with S_J = ηφ. As η → 0 the residual, which
/// equals the osmotic term, should vanish as η².
inline ClassicalLimitReport classical_limit_check(std::span<const ClassicalLimitSample> samples,
                                                  double floor = default_rho_floor) {
    ClassicalLimitReport rep;
    for (const auto& smp : samples) {
        const auto& p = smp.params;
        const auto& grid = smp.at.rho.spec;
        const double h = 0.5 * (smp.after.t - smp.before.t);
        if (!(h > 0.0)) throw UsageError("classical-limit sample needs increasing times");
        const auto V = p.potential_on(grid);
        const auto q = osmotic_term(smp.at.rho, p);
        std::vector<double> r(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            r[i] = p.eta * (smp.after.phi[i] - smp.before.phi[i]) / (2.0 * h) + V[i];
        for (std::size_t a = 0; a < p.dims(); ++a) {
            const auto ds = derivative(smp.at.phi, a);
            for (std::size_t i = 0; i < grid.size(); ++i) r[i] += p.eta * p.eta * ds[i] * ds[i] / (2.0 * p.mass(a));
        }
        double rr = 0.0, qq = 0.0, mm = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double w = smp.at.rho[i];
            if (w < floor) continue;
            rr += w * r[i] * r[i];
            qq += w * q[i] * q[i];
            mm += w * (r[i] - q[i]) * (r[i] - q[i]);
        }
        const double dv = grid.cell_volume();
        rep.eta.push_back(p.eta);
        rep.residual.push_back(std::sqrt(rr * dv));
        rep.osmotic.push_back(std::sqrt(qq * dv));
        rep.mismatch.push_back(std::sqrt(mm * dv));
    }
    const std::size_t n = rep.eta.size();
    if (n >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = std::log(rep.eta[i]), y = std::log(rep.residual[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double nn = static_cast<double>(n);
        rep.slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    }
    return rep;
}

} // namespace entropic
