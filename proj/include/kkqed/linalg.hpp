#pragma once

#include "constants.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kkqed
{

using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;

/// Positive semidefinite square root of a 2x2 Hermitian matrix.
/// Eigenvalues down to -1e-12 are clamped to zero; anything more negative is a domain error.
inline Matrix2c hermitian_sqrt(const Matrix2c& h)
{
    if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::domain_error("hermitian_sqrt: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix2c> es(h);
    Eigen::Vector2d lam = es.eigenvalues();
    for (int i = 0; i < 2; ++i)
    {
        if (lam[i] < -1e-12)
            throw std::domain_error("hermitian_sqrt: matrix has a negative eigenvalue");
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    }
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
}

/// Unitary factor U of the polar decomposition M = sqrt(M M^+) U, taken as W V^+ from
/// the full SVD M = W S V^+. An exactly zero matrix maps to the identity.
inline Matrix2c polar_unitary(const Matrix2c& m)
{
    if (m.isZero(0.0))
        return Matrix2c::Identity();
    Eigen::JacobiSVD<Matrix2c> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

/// Largest singular value.
template <typename Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m)
{
    using Plain = typename Derived::PlainObject;
    Eigen::JacobiSVD<Plain> svd(m.eval());
    return svd.singularValues()(0);
}

struct GaussRule
{
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights by Newton iteration on P_n.
inline GaussRule gauss_legendre(int n)
{
    if (n < 1)
        throw std::invalid_argument("gauss_legendre: order must be positive");
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i)
    {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter)
        {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k)
            {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        // Recompute the derivative at the converged node.
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k)
        {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(n - 1 - i);
        rule.nodes[lo] = -x;
        rule.nodes[hi] = x;
        rule.weights[lo] = w;
        rule.weights[hi] = w;
    }
    if (n % 2 == 1)
        rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return rule;
}

} // namespace kkqed
