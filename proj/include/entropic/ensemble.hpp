#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "entropic/csv.hpp"
#include "entropic/kernel.hpp"
#include "entropic/parallel.hpp"

namespace entropic {

/// M walkers at one instant. Walker w's draws at step k come from stream (seed, w, k).
struct Ensemble {
    std::size_t dims = 0;
    std::vector<double> positions;     ///< M × D, row-major
    std::vector<std::uint8_t> alive;   ///< 0 once absorbed
    std::vector<std::uint8_t> touched; ///< 1 once the walker has met a wall
    double t = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t step_index = 0;

    std::size_t size() const noexcept { return alive.size(); }
    std::span<double> walker(std::size_t i) { return {positions.data() + i * dims, dims}; }
    std::span<const double> walker(std::size_t i) const { return {positions.data() + i * dims, dims}; }
    std::size_t alive_count() const {
        return static_cast<std::size_t>(std::count(alive.begin(), alive.end(), std::uint8_t{1}));
    }
};

struct SamplingOptions {
    std::size_t cdf_bins = 8192;           ///< tabulation for per-axis inverse CDFs
    std::size_t envelope_points = 64;      ///< per-axis probe grid for the rejection envelope
    double envelope_margin = 1.25;
    std::size_t max_attempts = 1000000;    ///< per walker
};

namespace detail {

struct InverseCdf {
    double lo = 0.0, width = 1.0;
    std::vector<double> cumulative;   // at bin edges, normalised to 1

    InverseCdf(const ScalarField::Factor& f, const Axis& axis, std::size_t bins) : lo(axis.lo) {
        width = (axis.hi - axis.lo) / static_cast<double>(bins);
        cumulative.assign(bins + 1, 0.0);
        double prev = f(axis.lo);
        if (!(prev >= 0.0) || !std::isfinite(prev)) throw DomainError("initial density is negative or non-finite");
        for (std::size_t i = 1; i <= bins; ++i) {
            const double v = f(axis.lo + static_cast<double>(i) * width);
            if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("initial density is negative or non-finite");
            cumulative[i] = cumulative[i - 1] + 0.5 * (prev + v) * width;
            prev = v;
        }
        const double total = cumulative.back();
        if (!(total > 0.0) || !std::isfinite(total)) throw DomainError("initial density is not normalisable on the domain");
        for (auto& c : cumulative) c /= total;
    }

    double operator()(double u) const {
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        auto i = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
        i = std::clamp<std::size_t>(i, 1, cumulative.size() - 1);
        const double c0 = cumulative[i - 1], c1 = cumulative[i];
        const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
        return lo + (static_cast<double>(i - 1) + frac) * width;
    }
};

} // namespace detail

/// M independent draws from ρ₀ on the domain box: per-axis inverse CDF when ρ₀ is a
/// product of one-dimensional factors, rejection sampling otherwise.
inline Ensemble init_ensemble(const ScalarField& rho0, std::size_t M, std::uint64_t seed, const GridSpec& domain,
                              const SamplingOptions& opts = {}) {
    if (M < 1) throw UsageError("ensemble needs at least one walker");
    if (rho0.dims() != domain.dims()) throw UsageError("initial density and domain dimensions differ");
    const std::size_t D = domain.dims();
    Ensemble ens;
    ens.dims = D;
    ens.positions.assign(M * D, 0.0);
    ens.alive.assign(M, 1);
    ens.touched.assign(M, 0);
    ens.seed = seed;

    if (rho0.is_separable()) {
        std::vector<detail::InverseCdf> inv;
        for (std::size_t k = 0; k < D; ++k) inv.emplace_back(rho0.factors()[k], domain.axis(k), opts.cdf_bins);
        for (std::size_t w = 0; w < M; ++w) {
            RandomStream rs(seed, w, 0, StreamTag::init);
            for (std::size_t k = 0; k < D; ++k) ens.positions[w * D + k] = inv[k](rs.uniform());
        }
        return ens;
    }

    std::vector<Axis> probe_axes;
    for (const auto& a : domain.axes()) probe_axes.push_back(Axis{a.lo, a.hi, opts.envelope_points});
    const GridSpec probe(probe_axes, domain.boundary());
    double envelope = 0.0, mass = 0.0;
    std::vector<double> x(D);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        probe.center(i, x);
        const double v = rho0(x);
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("initial density is negative or non-finite");
        envelope = std::max(envelope, v);
        mass += v;
    }
    if (!(mass > 0.0)) throw DomainError("initial density is not normalisable on the domain");
    envelope *= opts.envelope_margin;
    for (std::size_t w = 0; w < M; ++w) {
        RandomStream rs(seed, w, 0, StreamTag::init);
        bool done = false;
        for (std::size_t attempt = 0; attempt < opts.max_attempts && !done; ++attempt) {
            for (std::size_t k = 0; k < D; ++k) {
                const auto& a = domain.axis(k);
                x[k] = a.lo + (a.hi - a.lo) * rs.uniform();
            }
            if (rs.uniform() * envelope <= rho0(x)) {
                std::copy(x.begin(), x.end(), ens.positions.begin() + static_cast<std::ptrdiff_t>(w * D));
                done = true;
            }
        }
        if (!done) throw NumericalError("rejection sampler exhausted its attempts for walker " + std::to_string(w));
    }
    return ens;
}

enum class BoundaryPolicy { reflect, absorb };

/// Positions before and after the most recent step (the two-instant ring buffer).
struct TransitionPairs {
    std::size_t dims = 0;
    double dt = 0.0;
    std::vector<double> before;
    std::vector<double> after;
    std::vector<std::uint8_t> valid;
};

/// Writes trajectory rows `step,walker_id,x_1..x_D` for live walkers with id below the limit.
class TrajectoryWriter {
public:
    explicit TrajectoryWriter(std::ostream& os, std::size_t dims,
                              std::size_t max_walkers = std::numeric_limits<std::size_t>::max())
        : os_(os), max_walkers_(max_walkers) {
        os_ << "step,walker_id";
        for (std::size_t k = 0; k < dims; ++k) os_ << ",x_" << (k + 1);
        os_ << '\n';
    }

    void operator()(const Ensemble& e) {
        for (std::size_t w = 0; w < e.size() && w < max_walkers_; ++w) {
            if (!e.alive[w]) continue;
            os_ << e.step_index << ',' << w;
            for (double v : e.walker(w)) os_ << ',' << csv::format(v);
            os_ << '\n';
        }
    }

private:
    std::ostream& os_;
    std::size_t max_walkers_;
};

struct EvolveOptions {
    BoundaryPolicy policy = BoundaryPolicy::reflect;
    std::optional<GridSpec> domain;        ///< walls; unbounded when empty
    unsigned threads = 1;
    TransitionPairs* pairs = nullptr;      ///< filled with the last step when set
    std::function<void(const Ensemble&)> observer;   ///< called after every step
};

struct EvolveReport {
    std::size_t absorbed = 0;
    std::size_t reflections = 0;
    std::size_t walkers_touched = 0;   ///< cumulative over the ensemble's history
};

/// Applies sample_step to every walker n_steps times; t advances by n_steps·Δt.
inline EvolveReport evolve(Ensemble& ens, const TransitionKernel& kernel, std::size_t n_steps,
                           const EvolveOptions& opts = {}) {
    if (ens.dims != kernel.dims()) throw UsageError("ensemble and kernel dimensions differ");
    const std::size_t D = ens.dims;
    const std::size_t M = ens.size();
    if (ens.touched.size() != M) ens.touched.resize(M, 0);
    EvolveReport rep;
    std::vector<std::uint32_t> reflections(M, 0);
    std::vector<std::uint8_t> absorbed_now(M, 0);

    for (std::size_t step = 0; step < n_steps; ++step) {
        const bool record = opts.pairs && step + 1 == n_steps;
        if (record) {
            opts.pairs->dims = D;
            opts.pairs->dt = kernel.step().dt;
            opts.pairs->before = ens.positions;
            opts.pairs->valid = ens.alive;
        }
        const std::uint64_t k = ens.step_index;
        parallel_for(M, opts.threads, [&](std::size_t begin, std::size_t end) {
            std::vector<double> next(D);
            for (std::size_t w = begin; w < end; ++w) {
                if (!ens.alive[w]) continue;
                RandomStream rs(ens.seed, w, k + 1, StreamTag::step);
                auto x = ens.walker(w);
                kernel.sample_step(x, rs, next);
                if (opts.domain) {
                    for (std::size_t a = 0; a < D; ++a) {
                        const auto& ax = opts.domain->axis(a);
                        if (next[a] >= ax.lo && next[a] <= ax.hi) continue;
                        ens.touched[w] = 1;
                        if (opts.policy == BoundaryPolicy::absorb) {
                            ens.alive[w] = 0;
                            absorbed_now[w] = 1;
                            break;
                        }
                        const double len = ax.hi - ax.lo;
                        while (next[a] < ax.lo || next[a] > ax.hi) {
                            next[a] = next[a] < ax.lo ? 2.0 * ax.lo - next[a] : 2.0 * ax.hi - next[a];
                            ++reflections[w];
                            if (reflections[w] > 1000000U || !std::isfinite(next[a]) || len <= 0.0)
                                throw NumericalError("walker " + std::to_string(w) + " cannot be reflected into the domain");
                        }
                    }
                }
                if (ens.alive[w]) std::copy(next.begin(), next.end(), x.begin());
            }
        });
        ens.step_index += 1;
        ens.t += kernel.step().dt;
        if (record) {
            opts.pairs->after = ens.positions;
            for (std::size_t w = 0; w < M; ++w) opts.pairs->valid[w] &= ens.alive[w];
        }
        if (opts.observer) opts.observer(ens);
    }
    for (std::size_t w = 0; w < M; ++w) {
        rep.reflections += reflections[w];
        rep.absorbed += absorbed_now[w];
        rep.walkers_touched += ens.touched[w];
    }
    return rep;
}

/// Histogram when bandwidth is empty, Gaussian product kernel otherwise.
struct DensityMethod {
    std::optional<double> bandwidth;
    static DensityMethod histogram() { return {}; }
    static DensityMethod kde(double h) { return {h}; }
};

/// Density estimate on the grid, renormalised so Σρ·ΔV = 1.
inline RealField estimate_density(const Ensemble& ens, const GridSpec& grid, DensityMethod method = {}) {
    if (grid.dims() != ens.dims) throw UsageError("density grid dimension mismatch");
    if (ens.alive_count() == 0) throw UsageError("cannot estimate a density from an empty ensemble");
    if (method.bandwidth && !(*method.bandwidth > 0.0)) throw UsageError("bandwidth must be positive");
    const std::size_t D = ens.dims;
    RealField rho(grid, 0.0);
    if (!method.bandwidth) {
        for (std::size_t w = 0; w < ens.size(); ++w) {
            if (!ens.alive[w]) continue;
            if (auto cell = grid.locate(ens.walker(w))) rho[*cell] += 1.0;
        }
    } else {
        const double h = *method.bandwidth;
        std::vector<std::size_t> lo(D), hi(D), idx(D);
        std::vector<std::vector<double>> weights(D);
        for (std::size_t w = 0; w < ens.size(); ++w) {
            if (!ens.alive[w]) continue;
            const auto x = ens.walker(w);
            bool empty = false;
            for (std::size_t k = 0; k < D; ++k) {
                const auto& a = grid.axis(k);
                const double u0 = (x[k] - 5.0 * h - a.lo) / a.spacing() - 0.5;
                const double u1 = (x[k] + 5.0 * h - a.lo) / a.spacing() - 0.5;
                if (u1 < 0.0 || u0 > static_cast<double>(a.n - 1)) {
                    empty = true;
                    break;
                }
                lo[k] = static_cast<std::size_t>(std::max(0.0, std::ceil(u0)));
                hi[k] = static_cast<std::size_t>(std::min(static_cast<double>(a.n - 1), std::floor(u1)));
                weights[k].clear();
                for (std::size_t i = lo[k]; i <= hi[k]; ++i) {
                    const double z = (a.center(i) - x[k]) / h;
                    weights[k].push_back(std::exp(-0.5 * z * z));
                }
            }
            if (empty) continue;
            idx = lo;
            while (true) {
                double wgt = 1.0;
                std::size_t flat = 0;
                for (std::size_t k = 0; k < D; ++k) {
                    wgt *= weights[k][idx[k] - lo[k]];
                    flat += idx[k] * grid.stride(k);
                }
                rho[flat] += wgt;
                bool done = true;
                for (std::size_t k = D; k-- > 0;) {
                    if (++idx[k] <= hi[k]) {
                        done = false;
                        break;
                    }
                    idx[k] = lo[k];
                }
                if (done) break;
            }
        }
    }
    double total = 0.0;
    for (double v : rho.values) total += v;
    if (!(total > 0.0)) throw UsageError("no walker falls inside the density grid");
    const double scale = 1.0 / (total * grid.cell_volume());
    for (auto& v : rho.values) v *= scale;
    return rho;
}

/// Cell-conditional mean velocities from one step of transition pairs.
struct DriftEstimate {
    GridSpec grid;
    std::size_t dims = 0;
    std::vector<std::size_t> forward_count;   ///< samples with x_t in the cell
    std::vector<std::size_t> backward_count;  ///< samples with x_{t+Δt} in the cell
    std::vector<double> b_hat, b_se;          ///< cell × D
    std::vector<double> bstar_hat, bstar_se;  ///< cell × D
    std::size_t min_samples = 30;

    bool low_confidence(std::size_t cell) const {
        return forward_count[cell] < min_samples || backward_count[cell] < min_samples;
    }
};

inline DriftEstimate empirical_drifts(const TransitionPairs& pairs, const GridSpec& grid, std::size_t min_samples = 30) {
    if (pairs.dims != grid.dims()) throw UsageError("drift grid dimension mismatch");
    if (pairs.before.size() != pairs.after.size() || pairs.dt <= 0.0)
        throw UsageError("transition pairs are incomplete");
    const std::size_t D = pairs.dims;
    const std::size_t cells = grid.size();
    DriftEstimate est;
    est.grid = grid;
    est.dims = D;
    est.min_samples = min_samples;
    est.forward_count.assign(cells, 0);
    est.backward_count.assign(cells, 0);
    std::vector<double> fs(cells * D, 0.0), fss(cells * D, 0.0), bs(cells * D, 0.0), bss(cells * D, 0.0);
    const std::size_t M = pairs.valid.size();
    for (std::size_t w = 0; w < M; ++w) {
        if (!pairs.valid[w]) continue;
        std::span<const double> x0(pairs.before.data() + w * D, D), x1(pairs.after.data() + w * D, D);
        const auto c0 = grid.locate(x0);
        const auto c1 = grid.locate(x1);
        for (std::size_t a = 0; a < D; ++a) {
            const double v = (x1[a] - x0[a]) / pairs.dt;
            if (c0) {
                fs[*c0 * D + a] += v;
                fss[*c0 * D + a] += v * v;
            }
            if (c1) {
                bs[*c1 * D + a] += v;
                bss[*c1 * D + a] += v * v;
            }
        }
        if (c0) ++est.forward_count[*c0];
        if (c1) ++est.backward_count[*c1];
    }
    auto finish = [&](const std::vector<std::size_t>& count, const std::vector<double>& s, const std::vector<double>& ss,
                      std::vector<double>& mean, std::vector<double>& se) {
        mean.assign(cells * D, std::numeric_limits<double>::quiet_NaN());
        se.assign(cells * D, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t c = 0; c < cells; ++c) {
            const auto n = static_cast<double>(count[c]);
            if (count[c] == 0) continue;
            for (std::size_t a = 0; a < D; ++a) {
                const double m = s[c * D + a] / n;
                mean[c * D + a] = m;
                if (count[c] > 1) {
                    const double var = std::max(0.0, (ss[c * D + a] - n * m * m) / (n - 1.0));
                    se[c * D + a] = std::sqrt(var / n);
                }
            }
        }
    };
    finish(est.forward_count, fs, fss, est.b_hat, est.b_se);
    finish(est.backward_count, bs, bss, est.bstar_hat, est.bstar_se);
    return est;
}

struct CellCheckReport {
    std::size_t cells_checked = 0;
    std::size_t cells_passed = 0;
    double max_z = 0.0;
    double pass_fraction() const {
        return cells_checked ? static_cast<double>(cells_passed) / static_cast<double>(cells_checked) : 0.0;
    }
};

/// Arrow-of-time diagnostic: b̂ - b̂* against (σ²/τ) ∂ log ρ̂ on well-populated cells,
/// pass when within n_se combined standard errors.
inline CellCheckReport arrow_of_time_check(const DriftEstimate& drifts, const RealField& rho_hat,
                                           const ConfigurationSpace& space, double tau, double n_se = 3.0) {
    if (!(rho_hat.spec == drifts.grid)) throw UsageError("density and drift grids differ");
    const std::size_t D = drifts.dims;
    RealField log_rho(rho_hat.spec);
    for (std::size_t i = 0; i < rho_hat.size(); ++i)
        log_rho[i] = rho_hat[i] > 0.0 ? std::log(rho_hat[i]) : -std::numeric_limits<double>::infinity();
    std::vector<RealField> grad;
    for (std::size_t a = 0; a < D; ++a) grad.push_back(derivative(log_rho, a));
    CellCheckReport rep;
    for (std::size_t c = 0; c < rho_hat.size(); ++c) {
        if (drifts.low_confidence(c) || !std::isfinite(log_rho[c])) continue;
        bool ok = true, usable = true;
        for (std::size_t a = 0; a < D; ++a) {
            const double g = grad[a][c];
            if (!std::isfinite(g)) {
                usable = false;
                break;
            }
            const double predicted = g / (tau * space.gamma(a));
            const double diff = drifts.b_hat[c * D + a] - drifts.bstar_hat[c * D + a];
            const double se = std::hypot(drifts.b_se[c * D + a], drifts.bstar_se[c * D + a]);
            const double z = std::abs(diff - predicted) / se;
            rep.max_z = std::max(rep.max_z, z);
            ok = ok && z <= n_se;
        }
        if (!usable) continue;
        ++rep.cells_checked;
        rep.cells_passed += ok ? 1 : 0;
    }
    return rep;
}

/// Bayes check of the past drift: per cell of x', the empirical mean of Δx/Δt against
/// the mean of b*(x') over the same samples.
inline CellCheckReport backward_drift_check(const TransitionPairs& pairs, const TransitionKernel& kernel,
                                            const ScalarField& rho, const GridSpec& grid, std::size_t min_samples = 30,
                                            double n_se = 3.0) {
    const auto est = empirical_drifts(pairs, grid, min_samples);
    const std::size_t D = pairs.dims;
    std::vector<double> predicted(grid.size() * D, 0.0);
    for (std::size_t w = 0; w < pairs.valid.size(); ++w) {
        if (!pairs.valid[w]) continue;
        std::span<const double> x1(pairs.after.data() + w * D, D);
        const auto c = grid.locate(x1);
        if (!c) continue;
        const auto bstar = kernel.backward_drift(x1, rho);
        for (std::size_t a = 0; a < D; ++a) predicted[*c * D + a] += bstar[a];
    }
    CellCheckReport rep;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const std::size_t n = est.backward_count[c];
        if (n < min_samples) continue;
        bool ok = true;
        for (std::size_t a = 0; a < D; ++a) {
            const double expect = predicted[c * D + a] / static_cast<double>(n);
            const double z = std::abs(est.bstar_hat[c * D + a] - expect) / est.bstar_se[c * D + a];
            rep.max_z = std::max(rep.max_z, z);
            ok = ok && z <= n_se;
        }
        ++rep.cells_checked;
        rep.cells_passed += ok ? 1 : 0;
    }
    return rep;
}

} // namespace entropic
