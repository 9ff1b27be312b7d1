#pragma once

#include "constants.hpp"
#include "linalg.hpp"
#include "permittivity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace kkqed
{

struct Layer
{
    double thickness = 0.0; // m
    PermittivityModel model = vacuum();
};

/// Layers ordered left to right between two semi-infinite claddings.
/// The first interface sits at x = 0.
struct DielectricStack
{
    PermittivityModel left_cladding = vacuum();
    PermittivityModel right_cladding = vacuum();
    std::vector<Layer> layers;

    void validate() const
    {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (!(layers[i].thickness > 0.0) || !std::isfinite(layers[i].thickness))
                throw std::invalid_argument("DielectricStack: layer " + std::to_string(i) + " needs a positive finite thickness");
    }

    double total_thickness() const
    {
        double d = 0.0;
        for (const auto& l : layers)
            d += l.thickness;
        return d;
    }
};

/// Wavenumber (w/c) sqrt(eps). Absorbers take Im n >= 0; gain media take the root with
/// Im n <= 0 that joins the absorbing branch continuously for Re eps > 0.
inline complex wavenumber(complex eps, double omega)
{
    if (eps == complex{0.0, 0.0})
        throw std::domain_error("wavenumber: eps = 0 is a branch point");
    complex n = std::sqrt(eps);
    if (eps.imag() >= 0.0 && n.imag() < 0.0)
        n = -n;
    return (omega / PhysicalConstants::c) * n;
}

namespace detail
{

struct Region
{
    complex eps;
    complex k;
    double left = 0.0;  // -inf for the left cladding
    double right = 0.0; // +inf for the right cladding
    double thickness() const { return right - left; }
};

inline std::vector<Region> regions(const DielectricStack& stack, double omega)
{
    if (!(omega > 0.0))
        throw std::domain_error("layered1d: frequency must be positive");
    stack.validate();
    std::vector<Region> out;
    out.reserve(stack.layers.size() + 2);
    const double inf = std::numeric_limits<double>::infinity();
    auto push = [&](const PermittivityModel& m, double l, double r) {
        const complex e = eval_eps(m, omega);
        out.push_back(Region{e, wavenumber(e, omega), l, r});
    };
    push(stack.left_cladding, -inf, 0.0);
    double x = 0.0;
    for (const auto& layer : stack.layers)
    {
        push(layer.model, x, x + layer.thickness);
        x += layer.thickness;
    }
    push(stack.right_cladding, x, inf);
    return out;
}

} // namespace detail

/// Transfer matrix mapping the plane-wave amplitudes (right-going, left-going) in the left
/// cladding, referred to x = 0, onto those in the right cladding, referred to the last
/// interface. det M = k_left / k_right.
inline Matrix2c transfer_matrix(const DielectricStack& stack, double omega)
{
    const auto reg = detail::regions(stack, omega);
    auto interface = [](complex k1, complex k2) {
        const complex q = k1 / k2;
        Matrix2c m;
        m << 0.5 * (1.0 + q), 0.5 * (1.0 - q), 0.5 * (1.0 - q), 0.5 * (1.0 + q);
        return m;
    };
    Matrix2c m = Matrix2c::Identity();
    for (std::size_t j = 1; j < reg.size(); ++j)
    {
        m = interface(reg[j - 1].k, reg[j].k) * m;
        if (j + 1 < reg.size())
        {
            const complex ph = std::exp(complex{0.0, 1.0} * reg[j].k * reg[j].thickness());
            Matrix2c p = Matrix2c::Zero();
            p(0, 0) = ph;
            p(1, 1) = 1.0 / ph;
            m = p * m;
        }
    }
    return m;
}

/// Scattering coefficients of a segment in raw field amplitudes:
/// (left-going out on the left, right-going out on the right) =
/// [[r, t_back], [t, r_back]] (right-going in on the left, left-going in on the right).
struct SegmentScattering
{
    complex r{0.0, 0.0};
    complex t{1.0, 0.0};
    complex r_back{0.0, 0.0};
    complex t_back{1.0, 0.0};
};

/// Redheffer star product; `left` is traversed first.
inline SegmentScattering star_product(const SegmentScattering& left, const SegmentScattering& right)
{
    const complex d = 1.0 / (1.0 - left.r_back * right.r);
    SegmentScattering s;
    s.r = left.r + left.t_back * right.r * left.t * d;
    s.t = right.t * left.t * d;
    s.t_back = left.t_back * right.t_back * d;
    s.r_back = right.r_back + right.t_back * left.r_back * right.t * d;
    return s;
}

/// Cladding-to-cladding scattering built by star products, which stays bounded for
/// optically thick absorbing layers where the transfer matrix overflows.
inline SegmentScattering stack_scattering(const DielectricStack& stack, double omega)
{
    const auto reg = detail::regions(stack, omega);
    SegmentScattering s;
    for (std::size_t j = 1; j < reg.size(); ++j)
    {
        const complex k1 = reg[j - 1].k;
        const complex k2 = reg[j].k;
        const SegmentScattering iface{(k1 - k2) / (k1 + k2), 2.0 * k1 / (k1 + k2), (k2 - k1) / (k1 + k2), 2.0 * k2 / (k1 + k2)};
        s = star_product(s, iface);
        if (j + 1 < reg.size())
        {
            const complex ph = std::exp(complex{0.0, 1.0} * reg[j].k * reg[j].thickness());
            s = star_product(s, SegmentScattering{0.0, ph, 0.0, ph});
        }
    }
    return s;
}

/// T and A of the device picture b = T a + A g (or A g^+ for lambda = -1).
/// Channel 1 is the left port, channel 2 the right port; amplitudes are flux normalized.
struct ScatteringPair
{
    Matrix2c T = Matrix2c::Zero();
    Matrix2c A = Matrix2c::Zero();
    double omega = 0.0;
    int lambda = 1; // +1 absorbing, -1 amplifying
};

inline ScatteringPair scattering_amplitudes(const DielectricStack& stack, double omega)
{
    const auto reg = detail::regions(stack, omega);
    for (const auto* r : {&reg.front(), &reg.back()})
        if (r->eps.imag() != 0.0 || !(r->eps.real() > 0.0))
            throw std::domain_error("scattering_amplitudes: claddings must be lossless with Re eps > 0");

    bool gain = false;
    bool lossless = true;
    for (std::size_t j = 1; j + 1 < reg.size(); ++j)
    {
        gain = gain || reg[j].eps.imag() < 0.0;
        lossless = lossless && reg[j].eps.imag() == 0.0;
    }

    const SegmentScattering s = stack_scattering(stack, omega);
    const double kl = reg.front().k.real();
    const double kr = reg.back().k.real();

    ScatteringPair out;
    out.omega = omega;
    out.T << s.r, s.t_back * std::sqrt(kl / kr), s.t * std::sqrt(kr / kl), s.r_back;
    const Matrix2c tt = out.T * out.T.adjoint();
    if (lossless)
        return out; // A = 0 exactly; T is unitary up to rounding
    if (gain)
    {
        out.lambda = -1;
        try
        {
            out.A = hermitian_sqrt(tt - Matrix2c::Identity());
        }
        catch (const std::domain_error&)
        {
            throw std::domain_error("scattering_amplitudes: stack mixes gain and loss so that T T^+ - I is indefinite");
        }
    }
    else
    {
        out.A = hermitian_sqrt(Matrix2c::Identity() - tt);
    }
    return out;
}

/// Scalar Green function of [d^2/dx^2 + (w/c)^2 eps(x, w)] G = -delta(x - x').
///
/// G = -u_>(x_>) / (u_>(x_<) [L_>(x_<) - L_<(x_<)]), where u_> (u_<) is the solution
/// outgoing to the right (left) and L the logarithmic derivative. Both are carried through
/// the layers as generalized reflection coefficients and log amplitudes, so nothing grows
/// exponentially inside thick absorbers.
class Green1D
{
public:
    Green1D(const DielectricStack& stack, double omega) : reg_(detail::regions(stack, omega))
    {
        const std::size_t n = reg_.size();
        const complex i{0.0, 1.0};
        refl_right_.assign(n, 0.0);
        refl_left_.assign(n, 0.0);
        log_c_.assign(n, 0.0);

        for (std::size_t j = n - 1; j-- > 0;)
        {
            const complex kj = reg_[j].k;
            const complex kn = reg_[j + 1].k;
            const complex load = (j + 1 == n - 1) ? complex{0.0, 0.0}
                                                  : refl_right_[j + 1] * std::exp(2.0 * i * kn * reg_[j + 1].thickness());
            const complex r = (kj - kn) / (kj + kn);
            refl_right_[j] = (r + load) / (1.0 + r * load);
        }
        for (std::size_t j = 1; j < n; ++j)
        {
            const complex kj = reg_[j].k;
            const complex kp = reg_[j - 1].k;
            const complex load = (j == 1) ? complex{0.0, 0.0}
                                          : refl_left_[j - 1] * std::exp(2.0 * i * kp * reg_[j - 1].thickness());
            const complex r = (kj - kp) / (kj + kp);
            refl_left_[j] = (r + load) / (1.0 + r * load);
        }

        // log of the amplitude of u_> in region j, region j referred to its right edge;
        // the right cladding carries exp(i k (x - x_N)).
        if (n >= 2)
        {
            log_c_[n - 2] = -std::log(1.0 + refl_right_[n - 2]);
            for (std::size_t j = n - 2; j-- > 0;)
            {
                const complex kn = reg_[j + 1].k;
                const double d = reg_[j + 1].thickness();
                const complex log_u_edge = log_c_[j + 1] - i * kn * d + std::log(1.0 + refl_right_[j + 1] * std::exp(2.0 * i * kn * d));
                log_c_[j] = log_u_edge - std::log(1.0 + refl_right_[j]);
            }
        }
    }

    complex operator()(double x, double xp) const
    {
        const double lo = std::min(x, xp);
        const double hi = std::max(x, xp);
        const std::size_t jl = region_of(lo);
        const complex ld = log_deriv_right(jl, lo) - log_deriv_left(jl, lo);
        return -std::exp(log_u_right(region_of(hi), hi) - log_u_right(jl, lo)) / ld;
    }

    std::size_t region_of(double x) const
    {
        for (std::size_t j = 0; j + 1 < reg_.size(); ++j)
            if (x <= reg_[j].right)
                return j;
        return reg_.size() - 1;
    }

    const std::vector<detail::Region>& regions() const noexcept { return reg_; }

private:
    complex log_u_right(std::size_t j, double x) const
    {
        const complex i{0.0, 1.0};
        const complex k = reg_[j].k;
        if (j == reg_.size() - 1)
            return i * k * (x - reg_[j].left);
        const double s = x - reg_[j].right;
        return log_c_[j] + i * k * s + std::log(1.0 + refl_right_[j] * std::exp(-2.0 * i * k * s));
    }

    complex log_deriv_right(std::size_t j, double x) const
    {
        const complex i{0.0, 1.0};
        const complex k = reg_[j].k;
        if (j == reg_.size() - 1)
            return i * k;
        const complex e = refl_right_[j] * std::exp(-2.0 * i * k * (x - reg_[j].right));
        return i * k * (1.0 - e) / (1.0 + e);
    }

    complex log_deriv_left(std::size_t j, double x) const
    {
        const complex i{0.0, 1.0};
        const complex k = reg_[j].k;
        if (j == 0)
            return -i * k;
        const complex e = refl_left_[j] * std::exp(2.0 * i * k * (x - reg_[j].left));
        return -i * k * (1.0 - e) / (1.0 + e);
    }

    std::vector<detail::Region> reg_;
    std::vector<complex> refl_right_; // reflection seen by u_> at the right edge of region j
    std::vector<complex> refl_left_;  // reflection seen by u_< at the left edge of region j
    std::vector<complex> log_c_;
};

inline complex green_function_1d(const DielectricStack& stack, double x, double xp, double omega)
{
    return Green1D(stack, omega)(x, xp);
}

struct FundamentalRelationOptions
{
    int nodes_per_wavelength = 64;
    int gauss_order = 8;
    /// When positive, lossless claddings are replaced by eps + i * window_absorption so the
    /// outgoing flux is absorbed instead of escaping.
    double window_absorption = 0.0;
};

struct FundamentalRelationReport
{
    double im_green = 0.0;      // Im G(x, x')
    complex volume_integral;    // quadrature over the finite window
    complex tail_integral;      // closed-form integral over absorbing claddings beyond the window
    complex boundary_flux;      // flux escaping through lossless claddings
    double residual = 0.0;      // |volume + tail - Im G| / |Im G|
    double flux_closed_residual = 0.0; // same with the boundary flux added
    bool boundary_flux_regime = false; // a cladding is lossless; the relation does not close without flux
    bool lossless_everywhere = false;
    std::size_t quadrature_nodes = 0;
};

/// Numerical check of
///
///     int ds (w/c)^2 eps_I(s) G(x, s) G*(x', s) = Im G(x, x')
///
/// Integration is composite Gauss-Legendre on panels split at every interface and at x, x'.
/// Outside the window spanned by the stack and the two points each cladding is homogeneous,
/// so its contribution is added in closed form.
inline FundamentalRelationReport verify_fundamental_relation(const DielectricStack& stack, double x, double xp, double omega,
                                                             const FundamentalRelationOptions& opt = {})
{
    if (opt.nodes_per_wavelength < 1 || opt.gauss_order < 1)
        throw std::invalid_argument("verify_fundamental_relation: quadrature settings must be positive");

    DielectricStack work = stack;
    if (opt.window_absorption > 0.0)
    {
        for (auto* clad : {&work.left_cladding, &work.right_cladding})
        {
            const complex e = eval_eps(*clad, omega);
            if (e.imag() == 0.0)
                *clad = ConstantModel{e + complex{0.0, opt.window_absorption}};
        }
    }

    const Green1D g(work, omega);
    const auto& reg = g.regions();
    const double k0 = omega / PhysicalConstants::c;

    FundamentalRelationReport rep;
    rep.lossless_everywhere = std::all_of(reg.begin(), reg.end(), [](const auto& r) { return r.eps.imag() == 0.0; });
    rep.boundary_flux_regime = reg.front().eps.imag() == 0.0 || reg.back().eps.imag() == 0.0;

    const double s_lo = std::min({0.0, x, xp});
    const double s_hi = std::max({work.total_thickness(), x, xp});
    std::vector<double> cuts{s_lo, s_hi, x, xp};
    for (std::size_t j = 0; j + 1 < reg.size(); ++j)
        cuts.push_back(reg[j].right);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    const GaussRule rule = gauss_legendre(opt.gauss_order);
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c)
    {
        const double a = cuts[c];
        const double b = cuts[c + 1];
        const auto& r = reg[g.region_of(0.5 * (a + b))];
        const double eps_i = r.eps.imag();
        if (eps_i == 0.0)
            continue;
        const double wavelengths = (b - a) * std::abs(r.k) / (2.0 * pi);
        const auto panels = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(wavelengths * opt.nodes_per_wavelength / opt.gauss_order)));
        const double h = (b - a) / static_cast<double>(panels);
        for (std::size_t p = 0; p < panels; ++p)
        {
            const double mid = a + (static_cast<double>(p) + 0.5) * h;
            for (std::size_t q = 0; q < rule.nodes.size(); ++q)
            {
                const double s = mid + 0.5 * h * rule.nodes[q];
                rep.volume_integral += 0.5 * h * rule.weights[q] * k0 * k0 * eps_i * g(x, s) * std::conj(g(xp, s));
                ++rep.quadrature_nodes;
            }
        }
    }

    auto edge = [&](const detail::Region& r, double s) {
        const complex prod = g(x, s) * std::conj(g(xp, s));
        if (r.eps.imag() > 0.0)
            rep.tail_integral += k0 * k0 * r.eps.imag() * prod / (2.0 * r.k.imag());
        else if (r.eps.imag() == 0.0)
            rep.boundary_flux += r.k.real() * prod;
        else
            throw std::domain_error("verify_fundamental_relation: amplifying cladding has no finite tail");
    };
    edge(reg.front(), s_lo);
    edge(reg.back(), s_hi);

    rep.im_green = g(x, xp).imag();
    const double denom = rep.im_green != 0.0 ? std::abs(rep.im_green) : 1.0;
    const complex lhs = rep.volume_integral + rep.tail_integral;
    rep.residual = std::abs(lhs - rep.im_green) / denom;
    rep.flux_closed_residual = std::abs(lhs + rep.boundary_flux - rep.im_green) / denom;
    return rep;
}

} // namespace kkqed
