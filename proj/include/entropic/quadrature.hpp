#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "entropic/errors.hpp"

namespace entropic {

/// Nodes and weights of n-point Gauss-Hermite quadrature for ∫ f(z) e^{-z²} dz.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;

    // Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix of the Hermite recurrence.
    explicit GaussHermite(std::size_t n) {
        if (n < 1) throw UsageError("Gauss-Hermite needs at least one node");
        Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t k = 1; k < n; ++k) {
            const double off = std::sqrt(static_cast<double>(k) / 2.0);
            jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = off;
            jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = off;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
        if (eig.info() != Eigen::Success) throw NumericalError("Gauss-Hermite eigen-solve failed");
        const double sqrt_pi = std::sqrt(3.14159265358979323846264338328);
        nodes.resize(n);
        weights.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            nodes[i] = eig.eigenvalues()(static_cast<Eigen::Index>(i));
            const double v0 = eig.eigenvectors()(0, static_cast<Eigen::Index>(i));
            weights[i] = sqrt_pi * v0 * v0;
        }
    }

    std::size_t size() const noexcept { return nodes.size(); }
};

/// Visits every node of the D-fold tensor product rule: f(z, w) with z the node vector
/// and w the product weight.
template <class F>
void tensor_gauss_hermite(const GaussHermite& rule, std::size_t dims, F&& f) {
    const std::size_t n = rule.size();
    std::vector<std::size_t> idx(dims, 0);
    std::vector<double> z(dims);
    while (true) {
        double w = 1.0;
        for (std::size_t k = 0; k < dims; ++k) {
            z[k] = rule.nodes[idx[k]];
            w *= rule.weights[idx[k]];
        }
        f(static_cast<const std::vector<double>&>(z), w);
        std::size_t k = 0;
        while (k < dims && ++idx[k] == n) idx[k++] = 0;
        if (k == dims) break;
    }
}

} // namespace entropic
