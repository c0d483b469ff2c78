#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "entropic/manifold.hpp"
#include "entropic/rng.hpp"

namespace entropic {

/// Multiplier α, time scale τ and instant spacing Δt, tied by α = τ/Δt.
struct StepParams {
    double alpha = 1.0;
    double tau = 1.0;
    double dt = 1.0;

    static StepParams from_tau_dt(double tau, double dt) { return make(tau / dt, tau, dt); }
    static StepParams from_alpha_tau(double alpha, double tau) { return make(alpha, tau, tau / alpha); }
    static StepParams from_alpha_dt(double alpha, double dt) { return make(alpha, alpha * dt, dt); }

private:
    static StepParams make(double alpha, double tau, double dt) {
        if (!(alpha > 0.0) || !(tau > 0.0) || !(dt > 0.0) || !std::isfinite(alpha) || !std::isfinite(tau) ||
            !std::isfinite(dt))
            throw DomainError("step parameters alpha, tau, dt must be positive and finite");
        return {alpha, tau, dt};
    }
};

enum class QualityPolicy { off, warn, error };

struct KernelOptions {
    std::size_t grid_points = 64;      ///< step grid points per axis
    double half_width = 6.0;           ///< step grid half-width in step standard deviations
    std::size_t cache_size = 1024;     ///< LRU capacity for normalisers
    QualityPolicy quality = QualityPolicy::warn;
    double quality_threshold = 0.1;    ///< max entropy change (nats) across one step deviation
    double coverage_tol = 1e-6;        ///< max kernel mass allowed on the step grid boundary
};

/// Quadrature moments of the exact kernel over a step grid.
struct StepMoments {
    std::vector<double> mean;          ///< ⟨Δx⟩
    std::vector<double> covariance;    ///< row-major D×D, about the mean
    double mean_sq_length = 0.0;       ///< ⟨γ_AB Δx^A Δx^B⟩
};

/// Outcome of maximising the discretised entropy functional over the step grid.
struct MeReport {
    double max_rel_deviation = 0.0;    ///< sup-norm relative gap to the closed-form kernel
    double recovered_alpha = 0.0;      ///< twice the multiplier of the ⟨Δℓ²⟩ constraint
    double lambda2 = 0.0;              ///< constraint value used
    int iterations = 0;
};

/// Maximum-entropy transition kernel P(x'|x) ∝ exp[S(x') - (α/2) γ_AB Δx^A Δx^B].
class TransitionKernel {
public:
    TransitionKernel(ConfigurationSpace space, PhiField phi, StepParams step, KernelOptions opts = {})
        : space_(std::move(space)), phi_(std::move(phi)), step_(step), opts_(opts),
          cache_(std::make_unique<Cache>()) {
        if (phi_.dims() != space_.dims()) throw UsageError("phi field dimension does not match configuration space");
    }

    // Copies start with an empty normaliser cache and their own warning counter.
    TransitionKernel(const TransitionKernel& o)
        : space_(o.space_), phi_(o.phi_), step_(o.step_), opts_(o.opts_), cache_(std::make_unique<Cache>()) {}
    TransitionKernel& operator=(const TransitionKernel& o) {
        if (this != &o) *this = TransitionKernel(o);
        return *this;
    }
    TransitionKernel(TransitionKernel&&) noexcept = default;
    TransitionKernel& operator=(TransitionKernel&&) noexcept = default;

    const ConfigurationSpace& space() const noexcept { return space_; }
    const PhiField& phi() const noexcept { return phi_; }
    const StepParams& step() const noexcept { return step_; }
    const KernelOptions& options() const noexcept { return opts_; }
    std::size_t dims() const noexcept { return space_.dims(); }

    void set_phi(PhiField phi) {
        if (phi.dims() != space_.dims()) throw UsageError("phi field dimension does not match configuration space");
        phi_ = std::move(phi);
        clear_cache();
    }
    void set_step(StepParams step) {
        step_ = step;
        clear_cache();
    }
    void clear_cache() const {
        std::lock_guard lock(cache_->mutex);
        cache_->order.clear();
        cache_->index.clear();
    }
    std::size_t cached_normalizers() const {
        std::lock_guard lock(cache_->mutex);
        return cache_->index.size();
    }

    double entropy(std::span<const double> x) const { return entropic::entropy(x, space_, phi_); }
    std::vector<double> entropy_gradient(std::span<const double> x) const {
        return entropic::entropy_gradient(x, space_, phi_);
    }

    /// Standard deviation of a step along axis A: σ_A / √α.
    double step_sigma(std::size_t a) const { return space_.sigma_of_axis(a) / std::sqrt(step_.alpha); }

    /// S(x') - (α/2) γ_AB Δx^A Δx^B.
    double log_transition_weight(std::span<const double> xp, std::span<const double> x) const {
        space_.check(x);
        space_.check(xp, "x'");
        return entropy(xp) - 0.5 * step_.alpha * sq_length(xp, x);
    }

    /// Default step grid: centred on the most probable step, ±half_width step deviations.
    GridSpec step_grid(std::span<const double> x) const {
        return step_grid(x, opts_.grid_points, opts_.half_width);
    }

    GridSpec step_grid(std::span<const double> x, std::size_t points, double half_width) const {
        space_.check(x);
        const auto shift = most_probable_step(x);
        std::vector<Axis> axes;
        for (std::size_t a = 0; a < dims(); ++a) {
            const double c = x[a] + shift[a];
            const double w = half_width * step_sigma(a);
            axes.push_back(Axis{c - w, c + w, points});
        }
        return GridSpec(std::move(axes), Boundary::dirichlet_zero, std::size_t{1} << 22);
    }

    /// log ζ(x, α) by midpoint quadrature over the step grid (cached per (x, grid)).
    /// Throws CoverageError when more than coverage_tol of the mass sits on the grid boundary.
    double log_normalizer(std::span<const double> x, const GridSpec& grid) const {
        const auto key = cache_key(x, grid);
        {
            std::lock_guard lock(cache_->mutex);
            auto it = cache_->index.find(key);
            if (it != cache_->index.end()) {
                cache_->order.splice(cache_->order.begin(), cache_->order, it->second);
                return it->second->second;
            }
        }
        double boundary_fraction = 0.0;
        const double value = log_partition(x, grid, step_.alpha, &boundary_fraction);
        if (boundary_fraction > opts_.coverage_tol)
            throw CoverageError("step grid too small: " + csv::format(boundary_fraction) +
                                " of the kernel mass lies on its boundary");
        if (opts_.cache_size > 0) {
            std::lock_guard lock(cache_->mutex);
            if (cache_->index.find(key) == cache_->index.end()) {
                cache_->order.emplace_front(key, value);
                cache_->index.emplace(key, cache_->order.begin());
                while (cache_->index.size() > opts_.cache_size) {
                    cache_->index.erase(cache_->order.back().first);
                    cache_->order.pop_back();
                }
            }
        }
        return value;
    }

    /// Exact kernel exp[S(x') - (α/2)Δℓ²] / ζ with ζ taken over `grid`.
    double transition_density_exact(std::span<const double> xp, std::span<const double> x,
                                    const GridSpec& grid) const {
        return std::exp(log_transition_weight(xp, x) - log_normalizer(x, grid));
    }

    StepMoments step_moments(std::span<const double> x, const GridSpec& grid) const {
        const std::size_t D = dims();
        const double logz = log_normalizer(x, grid);
        const double dv = grid.cell_volume();
        StepMoments m;
        m.mean.assign(D, 0.0);
        m.covariance.assign(D * D, 0.0);
        std::vector<double> xp(D);
        std::vector<double> second(D * D, 0.0);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            grid.center(i, xp);
            const double p = std::exp(log_transition_weight(xp, x) - logz) * dv;
            for (std::size_t a = 0; a < D; ++a) {
                const double da = xp[a] - x[a];
                m.mean[a] += p * da;
                m.mean_sq_length += p * space_.gamma(a) * da * da;
                for (std::size_t b = 0; b < D; ++b) second[a * D + b] += p * da * (xp[b] - x[b]);
            }
        }
        for (std::size_t a = 0; a < D; ++a)
            for (std::size_t b = 0; b < D; ++b) m.covariance[a * D + b] = second[a * D + b] - m.mean[a] * m.mean[b];
        return m;
    }

    /// Δx̄^A = (1/α) γ^{AB} ∂_B S.
    std::vector<double> most_probable_step(std::span<const double> x) const {
        auto g = entropy_gradient(x);
        for (std::size_t a = 0; a < g.size(); ++a) g[a] /= step_.alpha * space_.gamma(a);
        return g;
    }

    /// Future drift b^A = (σ_A²/τ) ∂_A S.
    std::vector<double> forward_drift(std::span<const double> x) const {
        auto g = entropy_gradient(x);
        for (std::size_t a = 0; a < g.size(); ++a) g[a] /= step_.tau * space_.gamma(a);
        return g;
    }

    /// Past drift b*^A = b^A - (σ_A²/τ) ∂_A log ρ.
    std::vector<double> backward_drift(std::span<const double> x, const ScalarField& rho) const {
        const double r = rho(x);
        if (!(r > 0.0)) throw DomainError("backward drift needs rho > 0, got " + csv::format(r));
        auto b = forward_drift(x);
        const auto dr = rho.gradient(x);
        for (std::size_t a = 0; a < b.size(); ++a) b[a] -= dr[a] / r / (step_.tau * space_.gamma(a));
        return b;
    }

    /// Largest entropy change across one step standard deviation, max_A |∂_A S| σ_A/√α.
    double step_quality(std::span<const double> x) const {
        const auto g = entropy_gradient(x);
        double q = 0.0;
        for (std::size_t a = 0; a < g.size(); ++a) q = std::max(q, std::abs(g[a]) * step_sigma(a));
        return q;
    }

    std::size_t quality_warnings() const noexcept { return quality_warnings_->load(); }

    /// One draw x' = x + bΔt + Δw, ⟨Δw^A Δw^B⟩ = (σ_A²/τ) Δt δ^{AB}.
    void sample_step(std::span<const double> x, RandomStream& stream, std::span<double> out) const {
        space_.check(x);
        if (opts_.quality != QualityPolicy::off) {
            const double q = step_quality(x);
            if (q > opts_.quality_threshold) {
                if (opts_.quality == QualityPolicy::error)
                    throw DomainError("entropy varies by " + csv::format(q) +
                                      " nats across one step deviation; Gaussian step approximation is poor");
                quality_warnings_->fetch_add(1, std::memory_order_relaxed);
            }
        }
        const auto b = forward_drift(x);
        for (std::size_t a = 0; a < dims(); ++a) {
            const double sd = step_sigma(a);
            out[a] = x[a] + b[a] * step_.dt + sd * stream.normal();
        }
    }

    std::vector<double> sample_step(std::span<const double> x, RandomStream& stream) const {
        std::vector<double> out(dims());
        sample_step(x, stream, out);
        return out;
    }

    /// λ² = -2 ∂ log ζ / ∂α by a central difference in α on a fixed grid.
    double lambda2_from_normalizer(std::span<const double> x, const GridSpec& grid, double rel_step = 1e-4) const {
        const double da = rel_step * step_.alpha;
        const double up = log_partition(x, grid, step_.alpha + da, nullptr);
        const double dn = log_partition(x, grid, step_.alpha - da, nullptr);
        return -2.0 * (up - dn) / (2.0 * da);
    }

    /// Maximises -Σ P log(P / γ^{1/2}ΔV) + Σ P S over the simplex on `grid`, subject to
    /// ⟨Δℓ²⟩ = λ²(α), by infeasible-start Newton; compares the maximiser with the
    /// closed-form kernel.
    MeReport verify_me_maximizer(std::span<const double> x, const GridSpec& grid, double tol = 1e-12,
                                 int max_iterations = 500) const {
        const std::size_t n = grid.size();
        if (n > 10000) throw UsageError("maximiser check limited to 10^4 grid points");
        const std::size_t D = dims();
        std::vector<double> s(n), len(n), closed(n);
        std::vector<double> xp(D);
        double wmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            grid.center(i, xp);
            s[i] = entropy(xp);
            len[i] = sq_length(xp, x);
            closed[i] = s[i] - 0.5 * step_.alpha * len[i];
            wmax = std::max(wmax, closed[i]);
        }
        double z = 0.0;
        for (auto& c : closed) z += (c = std::exp(c - wmax));
        double lambda2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            closed[i] /= z;
            lambda2 += closed[i] * len[i];
        }
        const double c0 = std::log(space_.volume_measure() * grid.cell_volume());

        std::vector<double> p(n, 1.0 / static_cast<double>(n)), g(n), dp(n), trial(n);
        double nu0 = 0.0, nu1 = 0.0;
        auto residual = [&](const std::vector<double>& q, double m0, double m1) {
            double r = 0.0, sum = 0.0, mom = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = std::log(q[i]) - c0 + 1.0 - s[i] + m0 + m1 * len[i];
                r += gi * gi;
                sum += q[i];
                mom += q[i] * len[i];
            }
            r += (sum - 1.0) * (sum - 1.0) + (mom - lambda2) * (mom - lambda2) / (lambda2 * lambda2);
            return std::sqrt(r);
        };
        MeReport rep;
        rep.lambda2 = lambda2;
        bool converged = false;
        for (int it = 0; it < max_iterations; ++it) {
            rep.iterations = it + 1;
            double dual_inf = 0.0, sum = 0.0, mom = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                g[i] = std::log(p[i]) - c0 + 1.0 - s[i];
                dual_inf = std::max(dual_inf, std::abs(g[i] + nu0 + nu1 * len[i]));
                sum += p[i];
                mom += p[i] * len[i];
            }
            if (dual_inf < tol && std::abs(sum - 1.0) < tol && std::abs(mom - lambda2) < tol * lambda2) {
                converged = true;
                break;
            }
            // Schur complement of [diag(1/p) Aᵀ; A 0] with A = [1; Δℓ²].
            double m00 = 0.0, m01 = 0.0, m11 = 0.0, pg0 = 0.0, pg1 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                m00 += p[i];
                m01 += p[i] * len[i];
                m11 += p[i] * len[i] * len[i];
                pg0 += p[i] * g[i];
                pg1 += p[i] * len[i] * g[i];
            }
            const double r0 = sum - 1.0 - pg0;
            const double r1 = mom - lambda2 - pg1;
            const double det = m00 * m11 - m01 * m01;
            if (!(std::abs(det) > 0.0)) throw NumericalError("maximiser Newton system is singular");
            const double w0 = (r0 * m11 - r1 * m01) / det;
            const double w1 = (m00 * r1 - m01 * r0) / det;
            for (std::size_t i = 0; i < n; ++i) dp[i] = -p[i] * (g[i] + w0 + w1 * len[i]);
            const double r_now = residual(p, nu0, nu1);
            double t = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                bool positive = true;
                for (std::size_t i = 0; i < n && positive; ++i) {
                    trial[i] = p[i] + t * dp[i];
                    positive = trial[i] > 0.0;
                }
                if (!positive) continue;
                const double m0 = nu0 + t * (w0 - nu0), m1 = nu1 + t * (w1 - nu1);
                if (residual(trial, m0, m1) <= (1.0 - 0.01 * t) * r_now || t < 1e-12) {
                    p.swap(trial);
                    nu0 = m0;
                    nu1 = m1;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) throw NumericalError("maximiser line search failed at iteration " + std::to_string(it));
        }
        if (!converged)
            throw NumericalError("entropy maximiser did not converge in " + std::to_string(max_iterations) +
                                 " iterations");
        for (std::size_t i = 0; i < n; ++i)
            rep.max_rel_deviation = std::max(rep.max_rel_deviation, std::abs(p[i] - closed[i]) / closed[i]);
        rep.recovered_alpha = 2.0 * nu1;
        return rep;
    }

private:
    struct Cache {
        std::mutex mutex;
        std::list<std::pair<std::string, double>> order;
        std::unordered_map<std::string, std::list<std::pair<std::string, double>>::iterator> index;
    };

    double sq_length(std::span<const double> xp, std::span<const double> x) const {
        double l = 0.0;
        for (std::size_t a = 0; a < x.size(); ++a) {
            const double d = xp[a] - x[a];
            l += space_.gamma(a) * d * d;
        }
        return l;
    }

    double log_partition(std::span<const double> x, const GridSpec& grid, double alpha,
                         double* boundary_fraction) const {
        space_.check(x);
        if (grid.dims() != dims()) throw UsageError("step grid dimension mismatch");
        const std::size_t D = dims();
        std::vector<double> xp(D), w(grid.size());
        double wmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < grid.size(); ++i) {
            grid.center(i, xp);
            w[i] = entropy(xp) - 0.5 * alpha * sq_length(xp, x);
            wmax = std::max(wmax, w[i]);
        }
        double total = 0.0, edge = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double e = std::exp(w[i] - wmax);
            total += e;
            if (boundary_fraction) {
                bool on_edge = false;
                for (std::size_t k = 0; k < D && !on_edge; ++k) {
                    const auto c = grid.coord(i, k);
                    on_edge = c == 0 || c + 1 == grid.axis(k).n;
                }
                if (on_edge) edge += e;
            }
        }
        if (boundary_fraction) *boundary_fraction = edge / total;
        return wmax + std::log(total * grid.cell_volume());
    }

    std::string cache_key(std::span<const double> x, const GridSpec& grid) const {
        std::string key(reinterpret_cast<const char*>(x.data()), x.size() * sizeof(double));
        for (const auto& a : grid.axes()) {
            key.append(reinterpret_cast<const char*>(&a.lo), sizeof(double));
            key.append(reinterpret_cast<const char*>(&a.hi), sizeof(double));
            key.append(reinterpret_cast<const char*>(&a.n), sizeof(std::size_t));
        }
        return key;
    }

    ConfigurationSpace space_;
    PhiField phi_;
    StepParams step_;
    KernelOptions opts_;
    std::unique_ptr<Cache> cache_;
    std::shared_ptr<std::atomic<std::size_t>> quality_warnings_ = std::make_shared<std::atomic<std::size_t>>(0);
};

} // namespace entropic
