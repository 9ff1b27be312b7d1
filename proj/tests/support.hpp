#pragma once

#include "kkqed/fourport.hpp"
#include "kkqed/permittivity.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace testing_support
{

using kkqed::complex;
using kkqed::Matrix2c;

inline std::mt19937_64 rng(unsigned long long seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& g, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix with phase correction.
template <int N>
Eigen::Matrix<complex, N, N> random_unitary(std::mt19937_64& g)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Matrix<complex, N, N> z;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            z(i, j) = complex(n(g), n(g));
    Eigen::HouseholderQR<Eigen::Matrix<complex, N, N>> qr(z);
    Eigen::Matrix<complex, N, N> q = qr.householderQ();
    const Eigen::Matrix<complex, N, N> r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (int i = 0; i < N; ++i)
        q.col(i) *= r(i, i) / std::abs(r(i, i));
    return q;
}

/// T = U diag(s1, s2) V^+ with the given singular values.
inline Matrix2c matrix_with_singular_values(std::mt19937_64& g, double s1, double s2)
{
    return random_unitary<2>(g) * Eigen::Vector2cd(s1, s2).asDiagonal() * random_unitary<2>(g).adjoint();
}

inline kkqed::DeviceMatrices random_absorber(std::mt19937_64& g)
{
    kkqed::DeviceMatrices d;
    d.T = matrix_with_singular_values(g, uniform(g, 0.0, 1.0), uniform(g, 0.0, 1.0));
    d.A = kkqed::hermitian_sqrt(Matrix2c::Identity() - d.T * d.T.adjoint());
    d.lambda = 1;
    return d;
}

/// Two-mode squeezer network: T = U cosh(R) W, A = U sinh(R) V.
inline kkqed::DeviceMatrices random_amplifier(std::mt19937_64& g, double rmax = 1.5)
{
    const Matrix2c u = random_unitary<2>(g);
    const Matrix2c w = random_unitary<2>(g);
    const Matrix2c v = random_unitary<2>(g);
    const double r1 = uniform(g, 0.0, rmax);
    const double r2 = uniform(g, 0.0, rmax);
    kkqed::DeviceMatrices d;
    d.T = u * Eigen::Vector2cd(std::cosh(r1), std::cosh(r2)).asDiagonal() * w;
    d.A = u * Eigen::Vector2cd(std::sinh(r1), std::sinh(r2)).asDiagonal() * v;
    d.lambda = -1;
    return d;
}

inline kkqed::LorentzModel random_lorentz(std::mt19937_64& g, int terms, double omega_scale)
{
    std::vector<kkqed::LorentzTerm> t;
    for (int i = 0; i < terms; ++i)
    {
        const double wt = omega_scale * uniform(g, 0.5, 2.0);
        t.push_back({wt * uniform(g, 0.3, 1.5), wt, wt * uniform(g, 0.05, 0.5)});
    }
    return kkqed::LorentzModel(std::move(t));
}

inline std::vector<double> log_grid(double lo, double hi, int n)
{
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return g;
}

} // namespace testing_support
