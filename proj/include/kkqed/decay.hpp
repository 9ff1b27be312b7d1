#pragma once

#include "permittivity.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kkqed
{

/// Two-level emitter: transition dipole moment [C m], transition frequency [rad/s] and
/// height above the interface [m].
struct Dipole
{
    Eigen::Vector3d moment = Eigen::Vector3d::UnitZ();
    double omega = 0.0;
    double z = 0.0;

    void validate() const
    {
        if (!moment.allFinite() || moment.norm() <= 0.0)
            throw std::invalid_argument("Dipole: moment must be non-zero");
        if (!(omega > 0.0) || !std::isfinite(omega))
            throw std::invalid_argument("Dipole: transition frequency must be positive");
    }

    void validate_above_surface() const
    {
        validate();
        if (!(z > 0.0) || !std::isfinite(z))
            throw std::invalid_argument("Dipole: height above the interface must be positive");
    }
};

/// Thrown at the surface-plasmon pole eps = -1 of the near-surface rate.
class SurfaceResonanceError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

inline double gamma_free_space(const Dipole& d, const PhysicalConstants& pc = {})
{
    d.validate();
    const double w = d.omega;
    return w * w * w * d.moment.squaredNorm() / (3.0 * pi * pc.hbar * pc.epsilon0 * pc.c * pc.c * pc.c);
}

/// Im G_xx and Im G_zz at coincident points z above a half-space with permittivity eps
/// (vacuum above), split into the free-space part and the reflected part. Units 1/m.
struct HalfspaceGreenSample
{
    double omega = 0.0;
    double z = 0.0;
    complex eps{1.0, 0.0};
    double free_part = 0.0;
    double scattered_xx = 0.0;
    double scattered_zz = 0.0;
    double error_xx = 0.0; // accumulated quadrature error estimates
    double error_zz = 0.0;
    bool converged = true;

    double im_xx() const { return free_part + scattered_xx; }
    double im_yy() const { return im_xx(); }
    double im_zz() const { return free_part + scattered_zz; }
};

struct HalfspaceOptions
{
    double relative_tolerance = 1e-10;
    double tail_cutoff = 1e-12; // evanescent tail dropped below this fraction of the peak
    unsigned max_depth = 15;
};

namespace detail
{

struct Fresnel
{
    complex rs;
    complex rp;
};

/// Reflection coefficients for normalized vacuum normal wavevector sz = sqrt(1 - s^2).
/// eps - s^2 is formed as (eps - 1) + sz^2 so that eps = 1 reflects exactly nothing.
inline Fresnel fresnel(complex eps, complex sz)
{
    complex sz1 = std::sqrt((eps - 1.0) + sz * sz);
    if (sz1.imag() < 0.0)
        sz1 = -sz1;
    return {(sz - sz1) / (sz + sz1), (eps * sz - sz1) / (eps * sz + sz1)};
}

template <typename F>
double integrate_panel(F&& f, double a, double b, const HalfspaceOptions& opt, double& err)
{
    double e = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, opt.max_depth, opt.relative_tolerance, &e);
    err += e;
    return v;
}

} // namespace detail

/// Reflected part via the Sommerfeld integral over the in-plane wavevector q = k s.
///
/// Propagating waves (s < 1) are integrated in u = sqrt(1 - s^2), which removes the
/// 1/k_z endpoint singularity; evanescent waves (s > 1) in kappa = sqrt(s^2 - 1):
///   Im G_zz^R = k/(4 pi) [ Re int_0^1 (1-u^2) r_p e^{2iuk z} du + int_0^inf (1+kappa^2) Im r_p e^{-2 kappa k z} dkappa ]
///   Im G_xx^R = k/(8 pi) [ Re int_0^1 (r_s - u^2 r_p) e^{2iuk z} du + int_0^inf Im(r_s + kappa^2 r_p) e^{-2 kappa k z} dkappa ]
inline HalfspaceGreenSample im_green_halfspace(complex eps, double z, double omega, const HalfspaceOptions& opt = {},
                                               const PhysicalConstants& pc = {})
{
    if (!(z > 0.0) || !std::isfinite(z))
        throw std::invalid_argument("im_green_halfspace: z must be positive");
    if (!(omega > 0.0) || !std::isfinite(omega))
        throw std::invalid_argument("im_green_halfspace: omega must be positive");
    if (eps.imag() < 0.0)
        throw std::domain_error("im_green_halfspace: lower medium must not amplify (Im eps >= 0)");

    const double k = omega / pc.c;
    const double zn = k * z;

    HalfspaceGreenSample g;
    g.omega = omega;
    g.z = z;
    g.eps = eps;
    g.free_part = k / (6.0 * pi);

    // Propagating part: the phase 2 u zn turns over ~zn/pi times on [0, 1].
    const int prop_panels = std::max(1, static_cast<int>(std::ceil(zn)));
    auto prop_zz = [&](double u) {
        const auto f = detail::fresnel(eps, complex{u, 0.0});
        return ((1.0 - u * u) * f.rp * std::exp(complex{0.0, 2.0 * u * zn})).real();
    };
    auto prop_xx = [&](double u) {
        const auto f = detail::fresnel(eps, complex{u, 0.0});
        return ((f.rs - u * u * f.rp) * std::exp(complex{0.0, 2.0 * u * zn})).real();
    };
    double izz = 0.0;
    double ixx = 0.0;
    for (int p = 0; p < prop_panels; ++p)
    {
        const double a = static_cast<double>(p) / prop_panels;
        const double b = static_cast<double>(p + 1) / prop_panels;
        izz += detail::integrate_panel(prop_zz, a, b, opt, g.error_zz);
        ixx += detail::integrate_panel(prop_xx, a, b, opt, g.error_xx);
    }

    // Evanescent part: structure near kappa ~ sqrt|eps| from the Fresnel factors, then the
    // exponential envelope on the scale 1/(2 zn).
    auto ev_zz = [&](double kap) {
        const auto f = detail::fresnel(eps, complex{0.0, kap});
        return (1.0 + kap * kap) * f.rp.imag() * std::exp(-2.0 * kap * zn);
    };
    auto ev_xx = [&](double kap) {
        const auto f = detail::fresnel(eps, complex{0.0, kap});
        return (f.rs + kap * kap * f.rp).imag() * std::exp(-2.0 * kap * zn);
    };
    auto envelope = [&](double kap) { return (1.0 + kap * kap) * std::exp(-2.0 * kap * zn); };
    // Envelope peaks at kappa = 1/zn (for zn < 1) or at 0.
    const double kpeak = zn < 1.0 ? 1.0 / zn : 0.0;
    const double env_peak = envelope(kpeak);

    double a = 0.0;
    double b = std::min(1.0, 0.5 / zn);
    const double fresnel_scale = std::sqrt(std::abs(eps)) + 1.0;
    int guard = 0;
    while (true)
    {
        izz += detail::integrate_panel(ev_zz, a, b, opt, g.error_zz);
        ixx += detail::integrate_panel(ev_xx, a, b, opt, g.error_xx);
        if (b > kpeak && b > fresnel_scale && envelope(b) < opt.tail_cutoff * env_peak)
            break;
        if (++guard > 400)
        {
            g.converged = false;
            break;
        }
        a = b;
        b = b < fresnel_scale ? std::min(2.0 * b, fresnel_scale) : 1.5 * b;
    }

    g.scattered_zz = k / (4.0 * pi) * izz;
    g.scattered_xx = k / (8.0 * pi) * ixx;
    g.error_zz *= k / (4.0 * pi);
    g.error_xx *= k / (8.0 * pi);
    const double scale = std::max(g.free_part, std::max(std::abs(g.scattered_zz), std::abs(g.scattered_xx)));
    if (g.error_zz > 1e-6 * scale || g.error_xx > 1e-6 * scale)
        g.converged = false;
    return g;
}

inline HalfspaceGreenSample im_green_halfspace(const PermittivityModel& model, double z, double omega, const HalfspaceOptions& opt = {},
                                               const PhysicalConstants& pc = {})
{
    return im_green_halfspace(eval_eps(model, omega), z, omega, opt, pc);
}

/// Gamma = 2 omega^2 / (hbar eps0 c^2) * mu_k mu_k' Im G_kk' (diagonal for the half-space).
inline double gamma_rate(const HalfspaceGreenSample& g, const Dipole& d, const PhysicalConstants& pc = {})
{
    d.validate();
    if (std::abs(g.omega - d.omega) > 1e-12 * d.omega)
        throw std::domain_error("gamma_rate: Green sample frequency differs from the dipole transition frequency");
    if (std::abs(g.z - d.z) > 1e-12 * std::max(std::abs(d.z), std::abs(g.z)))
        throw std::domain_error("gamma_rate: Green sample height differs from the dipole height");
    const Eigen::Vector3d& mu = d.moment;
    const double contraction = (mu.x() * mu.x() + mu.y() * mu.y()) * g.im_xx() + mu.z() * mu.z() * g.im_zz();
    return 2.0 * d.omega * d.omega / (pc.hbar * pc.epsilon0 * pc.c * pc.c) * contraction;
}

/// Vacuum-sample rate; same as gamma_free_space but routed through the general formula.
inline double gamma_rate_vacuum(const Dipole& d, const PhysicalConstants& pc = {})
{
    HalfspaceGreenSample g;
    g.omega = d.omega;
    g.z = d.z;
    g.free_part = d.omega / (6.0 * pi * pc.c);
    return gamma_rate(g, d, pc);
}

/// Nonradiative near-surface rate
///   Gamma = Gamma_0 (1 + mu_z^2/mu^2) eps_I / |eps + 1|^2 * 3 c^3 / (2 omega z)^3.
inline double gamma_near_surface(complex eps, const Dipole& d, const PhysicalConstants& pc = {})
{
    d.validate_above_surface();
    if (eps == complex{-1.0, 0.0})
        throw SurfaceResonanceError("gamma_near_surface: eps = -1 is the surface-mode pole; the rate diverges");
    if (eps.imag() < 0.0)
        throw std::domain_error("gamma_near_surface: requires Im eps >= 0");
    const double orient = 1.0 + d.moment.z() * d.moment.z() / d.moment.squaredNorm();
    const double x = 2.0 * d.omega * d.z / pc.c;
    return gamma_free_space(d, pc) * orient * eps.imag() / std::norm(eps + 1.0) * 3.0 / (x * x * x);
}

} // namespace kkqed
