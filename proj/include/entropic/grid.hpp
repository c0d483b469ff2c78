#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entropic/errors.hpp"

namespace entropic {

enum class Boundary { dirichlet_zero, periodic };

inline std::string to_string(Boundary b) {
    return b == Boundary::periodic ? "periodic" : "dirichlet";
}

/// One axis of a cell-centred uniform grid: n cells of width (hi - lo) / n.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 8;

    double spacing() const noexcept { return (hi - lo) / static_cast<double>(n); }
    double center(std::size_t i) const noexcept {
        return lo + (static_cast<double>(i) + 0.5) * spacing();
    }
};

/// Uniform cell-centred grid over a box. Storage is row-major (last axis fastest).
class GridSpec {
public:
    static constexpr std::size_t min_points_per_axis = 8;
    static constexpr std::size_t default_max_cells = std::size_t{1} << 24;

    GridSpec() = default;

    explicit GridSpec(std::vector<Axis> axes, Boundary boundary = Boundary::dirichlet_zero,
                      std::size_t max_cells = default_max_cells)
        : axes_(std::move(axes)), boundary_(boundary) {
        if (axes_.empty()) throw UsageError("grid needs at least one axis");
        std::size_t total = 1;
        for (std::size_t k = 0; k < axes_.size(); ++k) {
            const auto& a = axes_[k];
            if (!(a.hi > a.lo) || !std::isfinite(a.lo) || !std::isfinite(a.hi))
                throw UsageError("grid axis " + std::to_string(k) + ": need finite lo < hi");
            if (a.n < min_points_per_axis)
                throw UsageError("grid axis " + std::to_string(k) + ": need at least " +
                                 std::to_string(min_points_per_axis) + " points");
            if (total > max_cells / a.n)
                throw UsageError("grid exceeds memory cap of " + std::to_string(max_cells) + " cells");
            total *= a.n;
        }
        size_ = total;
        strides_.assign(axes_.size(), 1);
        for (std::size_t k = axes_.size() - 1; k > 0; --k) strides_[k - 1] = strides_[k] * axes_[k].n;
    }

    /// Same box and resolution along every one of `dims` axes.
    static GridSpec cube(std::size_t dims, double lo, double hi, std::size_t n,
                         Boundary boundary = Boundary::dirichlet_zero) {
        return GridSpec(std::vector<Axis>(dims, Axis{lo, hi, n}), boundary);
    }

    std::size_t dims() const noexcept { return axes_.size(); }
    const Axis& axis(std::size_t k) const { return axes_.at(k); }
    const std::vector<Axis>& axes() const noexcept { return axes_; }
    Boundary boundary() const noexcept { return boundary_; }
    std::size_t size() const noexcept { return size_; }
    std::size_t stride(std::size_t k) const { return strides_.at(k); }

    double cell_volume() const noexcept {
        double v = 1.0;
        for (const auto& a : axes_) v *= a.spacing();
        return v;
    }

    /// Index of the flat cell `flat` along axis k.
    std::size_t coord(std::size_t flat, std::size_t k) const noexcept {
        return (flat / strides_[k]) % axes_[k].n;
    }

    void center(std::size_t flat, std::span<double> out) const {
        for (std::size_t k = 0; k < axes_.size(); ++k) out[k] = axes_[k].center(coord(flat, k));
    }

    std::vector<double> center(std::size_t flat) const {
        std::vector<double> x(dims());
        center(flat, x);
        return x;
    }

    /// Flat index of the cell containing x, or nullopt outside the box.
    std::optional<std::size_t> locate(std::span<const double> x) const {
        std::size_t flat = 0;
        for (std::size_t k = 0; k < axes_.size(); ++k) {
            const auto& a = axes_[k];
            if (!(x[k] >= a.lo) || !(x[k] < a.hi)) return std::nullopt;
            auto i = static_cast<std::size_t>((x[k] - a.lo) / a.spacing());
            i = std::min(i, a.n - 1);
            flat += i * strides_[k];
        }
        return flat;
    }

    bool operator==(const GridSpec& o) const {
        if (boundary_ != o.boundary_ || axes_.size() != o.axes_.size()) return false;
        for (std::size_t k = 0; k < axes_.size(); ++k)
            if (axes_[k].lo != o.axes_[k].lo || axes_[k].hi != o.axes_[k].hi || axes_[k].n != o.axes_[k].n)
                return false;
        return true;
    }

private:
    std::vector<Axis> axes_;
    Boundary boundary_ = Boundary::dirichlet_zero;
    std::size_t size_ = 0;
    std::vector<std::size_t> strides_;
};

/// Samples of a field at the cell centres of a grid.
template <class T>
struct GridField {
    GridSpec spec;
    std::vector<T> values;

    GridField() = default;
    explicit GridField(GridSpec s, T fill = T{}) : spec(std::move(s)), values(spec.size(), fill) {}
    GridField(GridSpec s, std::vector<T> v) : spec(std::move(s)), values(std::move(v)) {
        if (values.size() != spec.size()) throw UsageError("grid field size does not match grid");
    }

    std::size_t size() const noexcept { return values.size(); }
    T& operator[](std::size_t i) { return values[i]; }
    const T& operator[](std::size_t i) const { return values[i]; }
};

using RealField = GridField<double>;
using ComplexField = GridField<std::complex<double>>;

template <class F>
RealField sample(const GridSpec& spec, F&& f) {
    RealField out(spec);
    std::vector<double> x(spec.dims());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        spec.center(i, x);
        out[i] = f(std::span<const double>(x));
    }
    return out;
}

/// Midpoint-rule integral over the box.
template <class T>
T integrate(const GridField<T>& f) {
    T s{};
    for (const auto& v : f.values) s += v;
    return s * f.spec.cell_volume();
}

/// Multilinear interpolation between cell centres; constant beyond the outermost centres.
inline double interpolate(const RealField& f, std::span<const double> x) {
    const auto& spec = f.spec;
    const std::size_t d = spec.dims();
    if (x.size() != d) throw UsageError("interpolate: dimension mismatch");
    std::vector<std::size_t> base(d);
    std::vector<double> frac(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto& a = spec.axis(k);
        double u = (x[k] - a.lo) / a.spacing() - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(a.n - 1));
        auto i = static_cast<std::size_t>(std::floor(u));
        if (i >= a.n - 1) i = a.n - 2;
        base[k] = i;
        frac[k] = u - static_cast<double>(i);
    }
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
        double w = 1.0;
        std::size_t flat = 0;
        for (std::size_t k = 0; k < d; ++k) {
            const bool up = (corner >> k) & 1U;
            w *= up ? frac[k] : 1.0 - frac[k];
            flat += (base[k] + (up ? 1 : 0)) * spec.stride(k);
        }
        if (w != 0.0) acc += w * f[flat];
    }
    return acc;
}

namespace detail {

/// Neighbour values along an axis. Dirichlet grids use quadratic extrapolation for the
/// ghost value (exact for quadratics), periodic grids wrap.
template <class T>
inline void neighbours(const GridField<T>& f, std::size_t i, std::size_t k, T& left, T& right) {
    const auto& spec = f.spec;
    const std::size_t n = spec.axis(k).n;
    const std::size_t s = spec.stride(k);
    const std::size_t c = spec.coord(i, k);
    if (spec.boundary() == Boundary::periodic) {
        left = f[c == 0 ? i + (n - 1) * s : i - s];
        right = f[c == n - 1 ? i - (n - 1) * s : i + s];
        return;
    }
    if (c == 0) {
        right = f[i + s];
        left = T(3) * f[i] - T(3) * f[i + s] + f[i + 2 * s];
    } else if (c == n - 1) {
        left = f[i - s];
        right = T(3) * f[i] - T(3) * f[i - s] + f[i - 2 * s];
    } else {
        left = f[i - s];
        right = f[i + s];
    }
}

inline double wrap_phase(double d) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    return d - two_pi * std::round(d / two_pi);
}

} // namespace detail

/// Central first derivative along axis k. Boundaries use second-order one-sided stencils
/// (Dirichlet) or wrap (periodic).
template <class T>
GridField<T> derivative(const GridField<T>& f, std::size_t k) {
    GridField<T> out(f.spec);
    const double h = f.spec.axis(k).spacing();
    for (std::size_t i = 0; i < f.size(); ++i) {
        T l, r;
        detail::neighbours(f, i, k, l, r);
        out[i] = (r - l) / (2.0 * h);
    }
    return out;
}

/// Derivative of a phase: neighbour differences are taken modulo 2π so a periodic
/// winding differentiates correctly.
inline RealField phase_derivative(const RealField& f, std::size_t k) {
    RealField out(f.spec);
    const double h = f.spec.axis(k).spacing();
    for (std::size_t i = 0; i < f.size(); ++i) {
        double l, r;
        detail::neighbours(f, i, k, l, r);
        out[i] = (detail::wrap_phase(r - f[i]) + detail::wrap_phase(f[i] - l)) / (2.0 * h);
    }
    return out;
}

/// Central second derivative along axis k (same boundary handling as `derivative`).
inline RealField second_derivative(const RealField& f, std::size_t k) {
    RealField out(f.spec);
    const double h = f.spec.axis(k).spacing();
    for (std::size_t i = 0; i < f.size(); ++i) {
        double l, r;
        detail::neighbours(f, i, k, l, r);
        out[i] = (r - 2.0 * f[i] + l) / (h * h);
    }
    return out;
}

} // namespace entropic
