#pragma once

#include "constants.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace kkqed
{

/// One oscillator contribution strength^2 / (resonance^2 - w^2 - i damping w).
/// A resonance of zero gives a Drude term. All values in rad/s.
struct LorentzTerm
{
    double strength = 0.0;
    double resonance = 0.0;
    double damping = 0.0;
};

/// Causal permittivity built from a sum of Lorentz (or Drude) oscillators.
/// Every pole lies strictly in the lower half-plane and eps -> 1 at high frequency.
class LorentzModel
{
public:
    LorentzModel() = default;

    explicit LorentzModel(std::vector<LorentzTerm> terms) : terms_(std::move(terms))
    {
        for (const auto& t : terms_)
        {
            if (!(t.damping > 0.0) || !std::isfinite(t.damping))
                throw std::invalid_argument("LorentzModel: damping must be positive and finite");
            if (!(t.strength >= 0.0) || !std::isfinite(t.strength))
                throw std::invalid_argument("LorentzModel: strength must be non-negative and finite");
            if (!(t.resonance >= 0.0) || !std::isfinite(t.resonance))
                throw std::invalid_argument("LorentzModel: resonance must be non-negative and finite");
        }
    }

    const std::vector<LorentzTerm>& terms() const noexcept { return terms_; }

    /// Analytic continuation to complex frequency.
    complex at(complex omega) const
    {
        complex eps{1.0, 0.0};
        for (const auto& t : terms_)
        {
            const complex denom = t.resonance * t.resonance - omega * omega - complex{0.0, t.damping} * omega;
            if (denom == complex{0.0, 0.0})
                throw std::domain_error("LorentzModel: evaluated on a pole (Drude term at zero frequency)");
            eps += t.strength * t.strength / denom;
        }
        return eps;
    }

    double max_resonance() const noexcept
    {
        double m = 0.0;
        for (const auto& t : terms_)
            m = std::max(m, t.resonance);
        return m;
    }

private:
    std::vector<LorentzTerm> terms_;
};

/// Measured complex permittivity samples with piecewise-linear interpolation.
class TabulatedModel
{
public:
    TabulatedModel(std::vector<double> grid, std::vector<complex> values)
        : grid_(std::move(grid)), values_(std::move(values))
    {
        if (grid_.size() < 2)
            throw std::invalid_argument("TabulatedModel: grid needs at least two points");
        if (grid_.size() != values_.size())
            throw std::invalid_argument("TabulatedModel: grid and value counts differ");
        for (std::size_t i = 0; i < grid_.size(); ++i)
        {
            if (!std::isfinite(grid_[i]) || std::isnan(values_[i].real()) || std::isnan(values_[i].imag()))
                throw std::invalid_argument("TabulatedModel: non-finite sample at index " + std::to_string(i));
            if (i > 0 && !(grid_[i] > grid_[i - 1]))
                throw std::invalid_argument("TabulatedModel: grid must be strictly increasing");
        }
    }

    const std::vector<double>& grid() const noexcept { return grid_; }
    const std::vector<complex>& values() const noexcept { return values_; }

    complex at(double omega) const
    {
        if (!(omega >= grid_.front() && omega <= grid_.back()))
            throw std::range_error("TabulatedModel: frequency " + std::to_string(omega) + " outside tabulated grid");
        auto it = std::upper_bound(grid_.begin(), grid_.end(), omega);
        if (it == grid_.end())
            return values_.back();
        const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
        const std::size_t lo = hi - 1;
        const double w = (omega - grid_[lo]) / (grid_[hi] - grid_[lo]);
        return (1.0 - w) * values_[lo] + w * values_[hi];
    }

private:
    std::vector<double> grid_;
    std::vector<complex> values_;
};

/// Frequency-independent permittivity. Not Kramers-Kronig consistent unless eps == 1;
/// used for idealized layers and claddings at a single frequency.
struct ConstantModel
{
    complex value{1.0, 0.0};
};

using PermittivityModel = std::variant<LorentzModel, TabulatedModel, ConstantModel>;

inline PermittivityModel vacuum() { return ConstantModel{}; }

inline complex eval_eps(const PermittivityModel& model, double omega)
{
    return std::visit(
        [omega](const auto& m) -> complex {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LorentzModel>)
                return m.at(complex{omega, 0.0});
            else if constexpr (std::is_same_v<M, TabulatedModel>)
                return m.at(omega);
            else
                return m.value;
        },
        model);
}

// ---------------------------------------------------------------------------
// Kramers-Kronig reconstruction
// ---------------------------------------------------------------------------

struct KKEstimate
{
    double value = 0.0;      // Re eps(w) - 1
    double tail_bound = 0.0; // bound on the contribution from outside the grid
};

namespace detail
{

inline double interp_linear(std::span<const double> x, std::span<const double> y, double at)
{
    auto it = std::upper_bound(x.begin(), x.end(), at);
    if (it == x.begin())
        return y.front();
    if (it == x.end())
        return y.back();
    const std::size_t hi = static_cast<std::size_t>(it - x.begin());
    const std::size_t lo = hi - 1;
    const double w = (at - x[lo]) / (x[hi] - x[lo]);
    return (1.0 - w) * y[lo] + w * y[hi];
}

} // namespace detail

/// Principal-value estimate of Re eps(w) - 1 from samples of Im eps on a finite grid:
///
///     (2/pi) PV int dw' w' eps_I(w') / (w'^2 - w^2)
///
/// The value w eps_I(w) is subtracted from the numerator so the remaining integrand is
/// regular and integrated by the trapezoid rule; the subtracted piece is integrated in
/// closed form. Im eps is taken as zero outside the grid. The reported tail bound assumes
/// |eps_I| decays at least as w^-3 above the grid and stays below its edge value beneath it.
inline KKEstimate kk_real_from_imag(std::span<const double> grid, std::span<const double> imag, double omega)
{
    const std::size_t n = grid.size();
    if (n < 2 || imag.size() != n)
        throw std::invalid_argument("kk_real_from_imag: need matching grid and samples (at least two)");
    const double a = grid.front();
    const double b = grid.back();
    if (!(a >= 0.0))
        throw std::invalid_argument("kk_real_from_imag: grid must be non-negative");
    if (!(omega > a && omega < b))
        throw std::domain_error("kk_real_from_imag: evaluation frequency must lie strictly inside the grid");

    const double eps_at = detail::interp_linear(grid, imag, omega);
    const double f_at = omega * eps_at;

    // Slope of w eps_I(w) at the evaluation point, used where a node coincides with it.
    auto slope_at = [&](std::size_t j) {
        double s = 0.0;
        int count = 0;
        if (j > 0)
        {
            s += (grid[j] * imag[j] - grid[j - 1] * imag[j - 1]) / (grid[j] - grid[j - 1]);
            ++count;
        }
        if (j + 1 < n)
        {
            s += (grid[j + 1] * imag[j + 1] - grid[j] * imag[j]) / (grid[j + 1] - grid[j]);
            ++count;
        }
        return s / count;
    };

    auto integrand = [&](std::size_t j) {
        const double w = grid[j];
        if (std::abs(w - omega) <= 1e-12 * omega)
            return slope_at(j) / (2.0 * omega);
        return (w * imag[j] - f_at) / ((w - omega) * (w + omega));
    };

    double sum = 0.0;
    double prev = integrand(0);
    for (std::size_t j = 1; j < n; ++j)
    {
        const double cur = integrand(j);
        sum += 0.5 * (grid[j] - grid[j - 1]) * (prev + cur);
        prev = cur;
    }

    // PV int_a^b dw' / (w'^2 - w^2) = (1/2w) ln |(b - w)(a + w) / ((b + w)(a - w))|
    const double log_term = std::log(std::abs((b - omega) * (a + omega) / ((b + omega) * (a - omega))));
    sum += 0.5 * eps_at * log_term;

    KKEstimate out;
    out.value = (2.0 / pi) * sum;

    const double upper = (2.0 / pi) * std::abs(imag[n - 1]) / (3.0 * (1.0 - (omega / b) * (omega / b)));
    const double lower = a > 0.0 ? (2.0 / pi) * std::abs(imag[0]) * 0.5 * std::log(omega * omega / (omega * omega - a * a)) : 0.0;
    out.tail_bound = upper + lower;
    return out;
}

struct CausalityOptions
{
    double tolerance = 0.01;          // max normalized deviation for a causal-consistent verdict
    double interior_fraction = 0.8;   // central share of the report grid that is scored
    int quadrature_points_per_decade = 2000;
};

struct CausalityReport
{
    std::vector<double> omega;
    std::vector<complex> eps;
    std::vector<double> kk_real;   // reconstructed Re eps
    std::vector<double> residual;  // |kk - Re eps| / max|Re eps - 1|, NaN at the grid ends
    double scale = 0.0;            // max |Re eps - 1| on the grid
    double max_deviation = 0.0;    // over the interior fraction
    double tail_bound = 0.0;       // largest tail bound over scored points, normalized like residual
    bool consistent = false;
};

/// Compare Re eps against its Kramers-Kronig reconstruction from Im eps.
///
/// The quadrature runs on a logarithmic refinement of the report grid's span (plus the
/// report points themselves, and the tabulated nodes for measured data). Residuals are
/// normalized by the largest |Re eps - 1| on the grid so that zero crossings of the
/// susceptibility do not dominate the score.
inline CausalityReport causality_report(const PermittivityModel& model, std::span<const double> grid,
                                        const CausalityOptions& opt = {})
{
    if (grid.size() < 3)
        throw std::invalid_argument("causality_report: grid needs at least three points");
    if (!std::is_sorted(grid.begin(), grid.end()) || !(grid.front() > 0.0))
        throw std::invalid_argument("causality_report: grid must be positive and increasing");

    const double lo = grid.front();
    const double hi = grid.back();

    std::vector<double> nodes(grid.begin(), grid.end());
    const double decades = std::log10(hi / lo);
    const auto refine = static_cast<std::size_t>(std::ceil(decades * opt.quadrature_points_per_decade)) + 1;
    for (std::size_t i = 0; i < refine; ++i)
        nodes.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(refine - 1)));
    if (const auto* tab = std::get_if<TabulatedModel>(&model))
        for (double w : tab->grid())
            if (w > lo && w < hi)
                nodes.push_back(w);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end(), [](double x, double y) { return std::abs(x - y) <= 1e-14 * y; }),
                nodes.end());
    nodes.front() = lo;
    nodes.back() = hi;

    std::vector<double> imag(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        imag[i] = eval_eps(model, nodes[i]).imag();

    CausalityReport rep;
    const std::size_t m = grid.size();
    rep.omega.assign(grid.begin(), grid.end());
    rep.eps.resize(m);
    rep.kk_real.assign(m, std::numeric_limits<double>::quiet_NaN());
    rep.residual.assign(m, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> tails(m, 0.0);

    for (std::size_t i = 0; i < m; ++i)
    {
        rep.eps[i] = eval_eps(model, grid[i]);
        rep.scale = std::max(rep.scale, std::abs(rep.eps[i].real() - 1.0));
    }
    const double norm = rep.scale > 0.0 ? rep.scale : 1.0;

    for (std::size_t i = 1; i + 1 < m; ++i)
    {
        const auto est = kk_real_from_imag(nodes, imag, grid[i]);
        rep.kk_real[i] = 1.0 + est.value;
        rep.residual[i] = std::abs(rep.kk_real[i] - rep.eps[i].real()) / norm;
        tails[i] = est.tail_bound / norm;
    }

    const double skip = 0.5 * (1.0 - opt.interior_fraction) * static_cast<double>(m - 1);
    const auto first = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(skip)));
    const auto last = std::min<std::size_t>(m - 2, static_cast<std::size_t>(std::floor(static_cast<double>(m - 1) - skip)));
    for (std::size_t i = first; i <= last; ++i)
    {
        rep.max_deviation = std::max(rep.max_deviation, rep.residual[i]);
        rep.tail_bound = std::max(rep.tail_bound, tails[i]);
    }
    rep.consistent = rep.max_deviation <= opt.tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// Anisotropic / amplifying noise-coupling decomposition
// ---------------------------------------------------------------------------

/// Imaginary part of a reciprocal (hence symmetric) permittivity tensor.
class TensorPermittivity
{
public:
    explicit TensorPermittivity(const Eigen::Matrix3d& eps_imag)
    {
        const double asym = (eps_imag - eps_imag.transpose()).norm();
        if (!eps_imag.allFinite())
            throw std::invalid_argument("TensorPermittivity: non-finite entry");
        if (asym > 1e-12 * std::max(1.0, eps_imag.norm()))
            throw std::invalid_argument("TensorPermittivity: tensor is not symmetric");
        eps_imag_ = 0.5 * (eps_imag + eps_imag.transpose());
    }

    const Eigen::Matrix3d& eps_imag() const noexcept { return eps_imag_; }

private:
    Eigen::Matrix3d eps_imag_;
};

/// gamma_minus couples the absorbing eigen-directions to annihilation operators,
/// gamma_plus the amplifying ones to creation operators.
struct GammaPair
{
    Eigen::Matrix3d gamma_minus = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d gamma_plus = Eigen::Matrix3d::Zero();
};

inline GammaPair gamma_decompose(const TensorPermittivity& t)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(t.eps_imag());
    if (es.info() != Eigen::Success)
        throw std::runtime_error("gamma_decompose: eigensolver failed");
    const Eigen::Vector3d& lam = es.eigenvalues();
    const Eigen::Matrix3d& o = es.eigenvectors();
    const double zero = 1e-14 * lam.cwiseAbs().maxCoeff();

    Eigen::Vector3d absorbing = Eigen::Vector3d::Zero();
    Eigen::Vector3d amplifying = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i)
    {
        if (std::abs(lam[i]) <= zero)
            continue;
        if (lam[i] > 0.0)
            absorbing[i] = std::sqrt(lam[i]);
        else
            amplifying[i] = std::sqrt(-lam[i]);
    }

    GammaPair g;
    g.gamma_minus = o * absorbing.asDiagonal() * o.transpose();
    g.gamma_plus = o * amplifying.asDiagonal() * o.transpose();
    return g;
}

} // namespace kkqed
