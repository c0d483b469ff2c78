#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "entropic/grid.hpp"

namespace entropic {

/// A real function over configuration space, given either in closed form or by grid samples.
///
/// Closed forms may supply an analytic gradient; otherwise central differences are used.
/// Grid-backed fields interpolate multilinearly and differentiate on the grid (one-sided
/// stencils at the boundary), then interpolate the gradient.
class ScalarField {
public:
    using ValueFn = std::function<double(std::span<const double>)>;
    using GradFn = std::function<void(std::span<const double>, std::span<double>)>;
    using Factor = std::function<double(double)>;

    ScalarField() = default;

    static ScalarField closed_form(std::size_t dims, ValueFn value, GradFn grad = {}) {
        ScalarField f;
        f.dims_ = dims;
        f.value_ = std::move(value);
        f.grad_ = std::move(grad);
        return f;
    }

    /// Product of one-dimensional factors, f(x) = Π_k f_k(x_k). Samplers use the
    /// product structure for per-axis inverse-CDF draws.
    static ScalarField separable(std::vector<Factor> factors, std::vector<Factor> dfactors = {}) {
        if (!dfactors.empty() && dfactors.size() != factors.size())
            throw UsageError("separable field: factor/derivative count mismatch");
        ScalarField f;
        f.dims_ = factors.size();
        auto fs = std::make_shared<std::vector<Factor>>(std::move(factors));
        f.factors_ = fs;
        f.value_ = [fs](std::span<const double> x) {
            double v = 1.0;
            for (std::size_t k = 0; k < fs->size(); ++k) v *= (*fs)[k](x[k]);
            return v;
        };
        if (!dfactors.empty()) {
            auto dfs = std::make_shared<std::vector<Factor>>(std::move(dfactors));
            f.grad_ = [fs, dfs](std::span<const double> x, std::span<double> g) {
                const std::size_t d = fs->size();
                std::vector<double> vals(d);
                for (std::size_t k = 0; k < d; ++k) vals[k] = (*fs)[k](x[k]);
                for (std::size_t k = 0; k < d; ++k) {
                    double p = (*dfs)[k](x[k]);
                    for (std::size_t j = 0; j < d; ++j)
                        if (j != k) p *= vals[j];
                    g[k] = p;
                }
            };
        }
        return f;
    }

    static ScalarField from_grid(RealField samples) {
        ScalarField f;
        f.dims_ = samples.spec.dims();
        auto grid = std::make_shared<RealField>(std::move(samples));
        auto grads = std::make_shared<std::vector<RealField>>();
        for (std::size_t k = 0; k < f.dims_; ++k) grads->push_back(derivative(*grid, k));
        f.grid_ = grid;
        f.value_ = [grid](std::span<const double> x) { return interpolate(*grid, x); };
        f.grad_ = [grads](std::span<const double> x, std::span<double> g) {
            for (std::size_t k = 0; k < grads->size(); ++k) g[k] = interpolate((*grads)[k], x);
        };
        return f;
    }

    std::size_t dims() const noexcept { return dims_; }
    explicit operator bool() const noexcept { return static_cast<bool>(value_); }
    bool is_separable() const noexcept { return static_cast<bool>(factors_); }
    bool is_grid() const noexcept { return static_cast<bool>(grid_); }
    const std::vector<Factor>& factors() const { return *factors_; }
    const RealField& grid() const { return *grid_; }

    double operator()(std::span<const double> x) const {
        if (x.size() != dims_) throw UsageError("scalar field: dimension mismatch");
        return value_(x);
    }

    double operator()(std::initializer_list<double> x) const {
        return (*this)(std::span<const double>(x.begin(), x.size()));
    }

    void gradient(std::span<const double> x, std::span<double> out) const {
        if (x.size() != dims_ || out.size() != dims_) throw UsageError("scalar field: dimension mismatch");
        if (grad_) {
            grad_(x, out);
            return;
        }
        std::vector<double> xp(x.begin(), x.end());
        for (std::size_t k = 0; k < dims_; ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
            xp[k] = x[k] + h;
            const double fp = value_(xp);
            xp[k] = x[k] - h;
            const double fm = value_(xp);
            xp[k] = x[k];
            out[k] = (fp - fm) / (2.0 * h);
        }
    }

    std::vector<double> gradient(std::span<const double> x) const {
        std::vector<double> g(dims_);
        gradient(x, g);
        return g;
    }

    RealField sample_on(const GridSpec& spec) const {
        if (spec.dims() != dims_) throw UsageError("scalar field: grid dimension mismatch");
        return sample(spec, [this](std::span<const double> x) { return value_(x); });
    }

private:
    std::size_t dims_ = 0;
    ValueFn value_;
    GradFn grad_;
    std::shared_ptr<const std::vector<Factor>> factors_;
    std::shared_ptr<const RealField> grid_;
};

} // namespace entropic
