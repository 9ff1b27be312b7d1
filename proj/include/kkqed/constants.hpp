#pragma once

#include <complex>
#include <numbers>

namespace kkqed
{

using complex = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

// CODATA 2018, SI.
struct PhysicalConstants
{
    static constexpr double hbar = 1.054571817e-34;     // J s
    static constexpr double epsilon0 = 8.8541878128e-12; // F/m
    static constexpr double c = 299792458.0;            // m/s
    static constexpr double mu0 = 1.25663706212e-6;     // N/A^2
};

} // namespace kkqed
