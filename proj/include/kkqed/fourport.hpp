#pragma once

#include "linalg.hpp"

#include <stdexcept>

namespace kkqed
{

/// Field transformation T and device coupling A of a four-port at one frequency.
/// lambda = +1 for absorbing devices (T T^+ + A A^+ = I),
/// lambda = -1 for amplifying ones (T T^+ - A A^+ = I).
struct DeviceMatrices
{
    Matrix2c T = Matrix2c::Identity();
    Matrix2c A = Matrix2c::Zero();
    int lambda = 1;
    double omega = 0.0;

    double constraint_residual() const
    {
        const Matrix2c lhs = T * T.adjoint() + static_cast<double>(lambda) * (A * A.adjoint());
        return (lhs - Matrix2c::Identity()).cwiseAbs().maxCoeff();
    }

    void validate(double tol = 1e-10) const
    {
        if (lambda != 1 && lambda != -1)
            throw std::invalid_argument("DeviceMatrices: lambda must be +1 or -1");
        if (!T.allFinite() || !A.allFinite())
            throw std::invalid_argument("DeviceMatrices: non-finite entry");
        if (constraint_residual() > tol)
            throw std::invalid_argument(lambda == 1 ? "DeviceMatrices: T T^+ + A A^+ != I" : "DeviceMatrices: T T^+ - A A^+ != I");
    }
};

struct LambdaMatrix
{
    Matrix4c L = Matrix4c::Identity();
    int lambda = 1;

    Matrix2c block(int row, int col) const { return L.block<2, 2>(2 * row, 2 * col); }
};

/// Lambda = [[T, A], [-lambda S C^-1 T, C S^-1 A]] with C = sqrt(T T^+), S = sqrt(A A^+).
///
/// C^-1 T and S^-1 A are the unitary polar factors of T and A, which is the continuous
/// extension of the formula to singular C or S (lossless or opaque devices).
inline LambdaMatrix build_lambda(const DeviceMatrices& dev)
{
    dev.validate();
    const Matrix2c c = hermitian_sqrt(dev.T * dev.T.adjoint());
    const Matrix2c s = hermitian_sqrt(dev.A * dev.A.adjoint());
    const Matrix2c ut = polar_unitary(dev.T);
    const Matrix2c ua = polar_unitary(dev.A);

    LambdaMatrix out;
    out.lambda = dev.lambda;
    out.L.block<2, 2>(0, 0) = dev.T;
    out.L.block<2, 2>(0, 2) = dev.A;
    out.L.block<2, 2>(2, 0) = -static_cast<double>(dev.lambda) * s * ut;
    out.L.block<2, 2>(2, 2) = c * ua;
    return out;
}

inline Matrix4c group_metric(int lambda)
{
    Matrix4c g = Matrix4c::Identity();
    if (lambda == -1)
    {
        g(2, 2) = -1.0;
        g(3, 3) = -1.0;
    }
    return g;
}

struct GroupResidual
{
    double isometry = 0.0;      // ||L G L^+ - G|| (spectral norm)
    double det_deviation = 0.0; // |det L| - 1
};

inline GroupResidual check_group(const LambdaMatrix& lam)
{
    const Matrix4c g = group_metric(lam.lambda);
    GroupResidual r;
    r.isometry = spectral_norm(lam.L * g * lam.L.adjoint() - g);
    r.det_deviation = std::abs(lam.L.determinant()) - 1.0;
    return r;
}

} // namespace kkqed
