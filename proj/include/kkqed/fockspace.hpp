#pragma once

#include "fourport.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace kkqed
{

/// Thrown when the number cutoff cannot hold the photons a transform must carry.
class CutoffError : public std::runtime_error
{
public:
    CutoffError(const std::string& what, int required) : std::runtime_error(what), required_(required) {}
    int required_cutoff() const noexcept { return required_; }

private:
    int required_;
};

using Occupation = std::vector<int>;

/// Density matrix of up to four bosonic modes in the number basis |n_1 ... n_m>, n_i <= cutoff.
/// Basis order is lexicographic with n_1 most significant.
class FockDensity
{
public:
    FockDensity(int modes, int cutoff) : modes_(modes), cutoff_(cutoff)
    {
        if (modes < 1 || modes > 4)
            throw std::invalid_argument("FockDensity: between one and four modes");
        if (cutoff < 0)
            throw std::invalid_argument("FockDensity: cutoff must be non-negative");
        const auto d = dimension();
        rho_ = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    }

    FockDensity(int modes, int cutoff, Eigen::MatrixXcd rho) : FockDensity(modes, cutoff)
    {
        if (rho.rows() != rho_.rows() || rho.cols() != rho_.cols())
            throw std::invalid_argument("FockDensity: matrix size does not match modes and cutoff");
        rho_ = std::move(rho);
    }

    static FockDensity number_state(const Occupation& occ, int cutoff)
    {
        FockDensity out(static_cast<int>(occ.size()), cutoff);
        const auto i = static_cast<Eigen::Index>(out.index_of(occ));
        out.rho_(i, i) = 1.0;
        return out;
    }

    int modes() const noexcept { return modes_; }
    int cutoff() const noexcept { return cutoff_; }
    std::size_t dimension() const
    {
        std::size_t d = 1;
        for (int i = 0; i < modes_; ++i)
            d *= static_cast<std::size_t>(cutoff_ + 1);
        return d;
    }

    const Eigen::MatrixXcd& matrix() const noexcept { return rho_; }
    Eigen::MatrixXcd& matrix() noexcept { return rho_; }

    std::size_t index_of(const Occupation& occ) const
    {
        if (static_cast<int>(occ.size()) != modes_)
            throw std::invalid_argument("FockDensity: occupation has the wrong number of modes");
        std::size_t idx = 0;
        for (int n : occ)
        {
            if (n < 0 || n > cutoff_)
                throw std::out_of_range("FockDensity: occupation beyond cutoff");
            idx = idx * static_cast<std::size_t>(cutoff_ + 1) + static_cast<std::size_t>(n);
        }
        return idx;
    }

    Occupation occupation(std::size_t idx) const
    {
        Occupation occ(static_cast<std::size_t>(modes_));
        for (int i = modes_ - 1; i >= 0; --i)
        {
            occ[static_cast<std::size_t>(i)] = static_cast<int>(idx % static_cast<std::size_t>(cutoff_ + 1));
            idx /= static_cast<std::size_t>(cutoff_ + 1);
        }
        return occ;
    }

    double trace() const { return rho_.trace().real(); }

    /// Same state in a basis with a different cutoff; populations above a smaller
    /// cutoff are dropped.
    FockDensity with_cutoff(int cutoff) const
    {
        FockDensity out(modes_, cutoff);
        for (std::size_t i = 0; i < dimension(); ++i)
        {
            const auto oi = occupation(i);
            if (*std::max_element(oi.begin(), oi.end()) > cutoff)
                continue;
            const auto ni = static_cast<Eigen::Index>(out.index_of(oi));
            for (std::size_t j = 0; j < dimension(); ++j)
            {
                const auto oj = occupation(j);
                if (*std::max_element(oj.begin(), oj.end()) > cutoff)
                    continue;
                out.rho_(ni, static_cast<Eigen::Index>(out.index_of(oj))) =
                    rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
        return out;
    }

    double mean_photon_number(int mode) const
    {
        double n = 0.0;
        for (std::size_t i = 0; i < dimension(); ++i)
            n += occupation(i)[static_cast<std::size_t>(mode)] * rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
        return n;
    }

    double hermiticity_defect() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

    double min_eigenvalue() const
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho_ + rho_.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    std::vector<double> populations() const
    {
        std::vector<double> p(dimension());
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
        return p;
    }

private:
    int modes_;
    int cutoff_;
    Eigen::MatrixXcd rho_;
};

inline FockDensity kron(const FockDensity& a, const FockDensity& b)
{
    if (a.cutoff() != b.cutoff())
        throw std::invalid_argument("kron: cutoffs differ");
    const Eigen::MatrixXcd& x = a.matrix();
    const Eigen::MatrixXcd& y = b.matrix();
    Eigen::MatrixXcd out(x.rows() * y.rows(), x.cols() * y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    return FockDensity(a.modes() + b.modes(), a.cutoff(), std::move(out));
}

inline double trace_distance(const FockDensity& a, const FockDensity& b)
{
    if (a.modes() != b.modes() || a.cutoff() != b.cutoff())
        throw std::invalid_argument("trace_distance: states live in different spaces");
    const Eigen::MatrixXcd d = a.matrix() - b.matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (d + d.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Input preparation
// ---------------------------------------------------------------------------

struct VacuumPrep
{
};

struct FockPrep
{
    int n = 0;
};

/// Explicit single-mode density matrix in the number basis 0..dim-1.
struct DensityPrep
{
    Eigen::MatrixXcd rho;
};

using ChannelPrep = std::variant<VacuumPrep, FockPrep, DensityPrep>;

/// Preparation of the four input channels (a_1, a_2, g_1, g_2). Device channels
/// default to vacuum.
struct InputSpec
{
    std::array<ChannelPrep, 4> channels{VacuumPrep{}, VacuumPrep{}, VacuumPrep{}, VacuumPrep{}};

    static InputSpec fock(int n1, int n2)
    {
        InputSpec s;
        s.channels[0] = FockPrep{n1};
        s.channels[1] = FockPrep{n2};
        return s;
    }

    /// Largest photon number any channel can carry.
    int max_photons(std::size_t channel) const
    {
        return std::visit(
            [](const auto& p) -> int {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, VacuumPrep>)
                    return 0;
                else if constexpr (std::is_same_v<P, FockPrep>)
                    return p.n;
                else
                {
                    int m = 0;
                    for (Eigen::Index i = 0; i < p.rho.rows(); ++i)
                        if (std::abs(p.rho(i, i)) > 0.0)
                            m = static_cast<int>(i);
                    return m;
                }
            },
            channels[channel]);
    }

    int total_photons() const
    {
        int t = 0;
        for (std::size_t c = 0; c < 4; ++c)
            t += max_photons(c);
        return t;
    }

    bool device_vacuum() const
    {
        return std::holds_alternative<VacuumPrep>(channels[2]) && std::holds_alternative<VacuumPrep>(channels[3]);
    }
};

inline FockDensity channel_state(const ChannelPrep& prep, int cutoff)
{
    FockDensity out(1, cutoff);
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, VacuumPrep>)
                out.matrix()(0, 0) = 1.0;
            else if constexpr (std::is_same_v<P, FockPrep>)
            {
                if (p.n < 0)
                    throw std::invalid_argument("channel_state: negative photon number");
                if (p.n > cutoff)
                    throw CutoffError("channel_state: Fock state exceeds cutoff", p.n);
                out.matrix()(p.n, p.n) = 1.0;
            }
            else
            {
                if (p.rho.rows() != p.rho.cols() || p.rho.rows() < 1)
                    throw std::invalid_argument("channel_state: density matrix must be square");
                if (p.rho.rows() > cutoff + 1)
                    throw CutoffError("channel_state: density matrix exceeds cutoff", static_cast<int>(p.rho.rows()) - 1);
                out.matrix().topLeftCorner(p.rho.rows(), p.rho.cols()) = p.rho;
            }
        },
        prep);
    return out;
}

inline FockDensity make_input_state(const InputSpec& spec, int cutoff)
{
    FockDensity rho = channel_state(spec.channels[0], cutoff);
    for (std::size_t c = 1; c < 4; ++c)
        rho = kron(rho, channel_state(spec.channels[c], cutoff));
    return rho;
}

// ---------------------------------------------------------------------------
// Number-conserving (passive) maps
// ---------------------------------------------------------------------------

namespace detail
{

/// All occupations of `modes` modes with the given total, lexicographic (first mode most significant).
inline std::vector<Occupation> occupations_with_total(int modes, int total)
{
    std::vector<Occupation> out;
    Occupation occ(static_cast<std::size_t>(modes), 0);
    auto rec = [&](auto&& self, int mode, int left) -> void {
        if (mode == modes - 1)
        {
            occ[static_cast<std::size_t>(mode)] = left;
            out.push_back(occ);
            return;
        }
        for (int n = left; n >= 0; --n)
        {
            occ[static_cast<std::size_t>(mode)] = n;
            self(self, mode + 1, left - n);
        }
    };
    rec(rec, 0, total);
    std::reverse(out.begin(), out.end());
    return out;
}

/// Matrix of the Fock-space unitary U with U a_j^+ U^+ = sum_k map(k, j) a_k^+ on the
/// block of fixed total photon number, in the order of occupations_with_total.
/// Columns are inputs; each is built by expanding the transformed creation-operator monomial.
inline Eigen::MatrixXcd passive_block(const Eigen::MatrixXcd& map, int total)
{
    const int modes = static_cast<int>(map.rows());
    const auto states = occupations_with_total(modes, total);
    std::map<Occupation, Eigen::Index> position;
    for (std::size_t i = 0; i < states.size(); ++i)
        position.emplace(states[i], static_cast<Eigen::Index>(i));

    const auto dim = static_cast<Eigen::Index>(states.size());
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(dim, dim);
    for (Eigen::Index col = 0; col < dim; ++col)
    {
        const Occupation& in = states[static_cast<std::size_t>(col)];
        std::map<Occupation, complex> poly{{Occupation(static_cast<std::size_t>(modes), 0), complex{1.0, 0.0}}};
        double norm = 1.0;
        for (int j = 0; j < modes; ++j)
        {
            for (int rep = 0; rep < in[static_cast<std::size_t>(j)]; ++rep)
            {
                norm *= static_cast<double>(rep + 1);
                std::map<Occupation, complex> next;
                for (const auto& [occ, amp] : poly)
                {
                    for (int k = 0; k < modes; ++k)
                    {
                        const complex coef = map(k, j);
                        if (coef == complex{0.0, 0.0})
                            continue;
                        Occupation raised = occ;
                        const int nk = ++raised[static_cast<std::size_t>(k)];
                        next[raised] += amp * coef * std::sqrt(static_cast<double>(nk));
                    }
                }
                poly = std::move(next);
            }
        }
        const double scale = 1.0 / std::sqrt(norm);
        for (const auto& [occ, amp] : poly)
            u(position.at(occ), col) = amp * scale;
    }
    return u;
}

inline int total_of(const Occupation& occ)
{
    int t = 0;
    for (int n : occ)
        t += n;
    return t;
}

} // namespace detail

/// rho -> U rho U^+ for the passive mode map (any unitary, mode count = map size).
/// Exact: each total-photon-number block is transformed with its own finite matrix.
inline FockDensity apply_passive(const FockDensity& rho, const Eigen::MatrixXcd& map)
{
    if (map.rows() != rho.modes() || map.cols() != rho.modes())
        throw std::invalid_argument("apply_passive: mode map size does not match the state");
    const int n = rho.cutoff();
    const auto dim = rho.dimension();

    int required = 0;
    for (std::size_t i = 0; i < dim; ++i)
    {
        const auto ii = static_cast<Eigen::Index>(i);
        if (rho.matrix().row(ii).cwiseAbs().maxCoeff() > 0.0 || rho.matrix().col(ii).cwiseAbs().maxCoeff() > 0.0)
            required = std::max(required, detail::total_of(rho.occupation(i)));
    }
    if (required > n)
        throw CutoffError("passive transform needs cutoff >= " + std::to_string(required) + " (total input photon number), got " +
                              std::to_string(n),
                          required);

    std::vector<std::vector<Eigen::Index>> blocks(static_cast<std::size_t>(required + 1));
    std::vector<Eigen::MatrixXcd> unitaries;
    for (int t = 0; t <= required; ++t)
    {
        for (const auto& occ : detail::occupations_with_total(rho.modes(), t))
            blocks[static_cast<std::size_t>(t)].push_back(static_cast<Eigen::Index>(rho.index_of(occ)));
        unitaries.push_back(detail::passive_block(map, t));
    }

    FockDensity out(rho.modes(), n);
    for (std::size_t p = 0; p < blocks.size(); ++p)
    {
        for (std::size_t q = 0; q < blocks.size(); ++q)
        {
            const auto& bp = blocks[p];
            const auto& bq = blocks[q];
            Eigen::MatrixXcd sub(static_cast<Eigen::Index>(bp.size()), static_cast<Eigen::Index>(bq.size()));
            for (std::size_t i = 0; i < bp.size(); ++i)
                for (std::size_t j = 0; j < bq.size(); ++j)
                    sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rho.matrix()(bp[i], bq[j]);
            if (sub.cwiseAbs().maxCoeff() == 0.0)
                continue;
            const Eigen::MatrixXcd res = unitaries[p] * sub * unitaries[q].adjoint();
            for (std::size_t i = 0; i < bp.size(); ++i)
                for (std::size_t j = 0; j < bq.size(); ++j)
                    out.matrix()(bp[i], bq[j]) = res(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return out;
}

/// Absorbing-device transformation of the four-mode state (a_1, a_2, g_1, g_2) before the
/// device trace: rho_out = rho_in[Lambda^+ alpha, Lambda^T alpha^+].
inline FockDensity passive_transform(const FockDensity& rho, const LambdaMatrix& lam)
{
    if (lam.lambda != 1)
        throw std::invalid_argument("passive_transform: requires an absorbing device (lambda = +1)");
    if (rho.modes() != 4)
        throw std::invalid_argument("passive_transform: state must have four modes");
    return apply_passive(rho, Eigen::MatrixXcd(lam.L));
}

inline FockDensity partial_trace(const FockDensity& rho, std::vector<int> keep)
{
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    if (keep.empty())
        throw std::domain_error("partial_trace: keep set is empty");
    if (keep.front() < 0 || keep.back() >= rho.modes())
        throw std::domain_error("partial_trace: mode index out of range");

    const int m = rho.modes();
    const auto base = static_cast<std::size_t>(rho.cutoff() + 1);
    FockDensity out(static_cast<int>(keep.size()), rho.cutoff());

    std::unordered_map<std::size_t, std::vector<std::pair<Eigen::Index, Eigen::Index>>> groups;
    for (std::size_t i = 0; i < rho.dimension(); ++i)
    {
        const auto occ = rho.occupation(i);
        std::size_t kept = 0;
        std::size_t env = 0;
        for (int mode = 0; mode < m; ++mode)
        {
            const auto n = static_cast<std::size_t>(occ[static_cast<std::size_t>(mode)]);
            if (std::binary_search(keep.begin(), keep.end(), mode))
                kept = kept * base + n;
            else
                env = env * base + n;
        }
        groups[env].emplace_back(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(i));
    }
    for (const auto& [env, members] : groups)
        for (const auto& [ki, fi] : members)
            for (const auto& [kj, fj] : members)
                out.matrix()(ki, kj) += rho.matrix()(fi, fj);
    return out;
}

// ---------------------------------------------------------------------------
// Closed-form output statistics
// ---------------------------------------------------------------------------

struct ChannelDistribution
{
    std::vector<double> p; // p[k] = probability of k photons
    bool closed_form = false;
};

namespace detail
{

inline std::optional<int> fock_number(const ChannelPrep& prep)
{
    if (std::holds_alternative<VacuumPrep>(prep))
        return 0;
    if (const auto* f = std::get_if<FockPrep>(&prep))
        return f->n;
    return std::nullopt;
}

inline double binomial_pmf(int n, int k, double p)
{
    const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(logc) * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

} // namespace detail

/// Photon-number distribution of output field channel `channel` (0 or 1) for an absorbing
/// device with transformation matrix T.
///
/// |n, 0> (or |0, n>) gives the binomial law with success probability |T_i1|^2 (|T_i2|^2);
/// |1, 1> gives the three-term law with the coalescence term 2 |T_i1|^2 |T_i2|^2. Other
/// inputs, or non-vacuum device channels, run the full four-mode transform with the
/// positive-root completion A = sqrt(I - T T^+).
inline ChannelDistribution output_channel_distribution(const Matrix2c& T, const InputSpec& input, int channel)
{
    if (channel < 0 || channel > 1)
        throw std::invalid_argument("output_channel_distribution: channel must be 0 or 1");
    const auto i = static_cast<Eigen::Index>(channel);
    const double t1 = std::norm(T(i, 0));
    const double t2 = std::norm(T(i, 1));

    const auto n1 = detail::fock_number(input.channels[0]);
    const auto n2 = detail::fock_number(input.channels[1]);
    if (input.device_vacuum() && n1 && n2)
    {
        ChannelDistribution d;
        d.closed_form = true;
        if (*n2 == 0 || *n1 == 0)
        {
            const int n = *n1 + *n2;
            const double p = *n2 == 0 ? t1 : t2;
            for (int k = 0; k <= n; ++k)
                d.p.push_back(detail::binomial_pmf(n, k, p));
            return d;
        }
        if (*n1 == 1 && *n2 == 1)
        {
            d.p = {1.0 - t1 * (1.0 - t2) - t2 * (1.0 - t1), t1 + t2 - 4.0 * t1 * t2, 2.0 * t1 * t2};
            return d;
        }
    }

    DeviceMatrices dev;
    dev.T = T;
    dev.A = hermitian_sqrt(Matrix2c::Identity() - T * T.adjoint());
    const int cutoff = std::max(1, input.total_photons());
    const FockDensity out = passive_transform(make_input_state(input, cutoff), build_lambda(dev));
    ChannelDistribution d;
    d.p = partial_trace(out, {channel}).populations();
    return d;
}

// ---------------------------------------------------------------------------
// Amplifying devices
// ---------------------------------------------------------------------------

/// Lambda = diag(V1, V2) [[cosh R, sinh R], [sinh R, cosh R]] diag(W1, W2) for a
/// pseudo-unitary Lambda acting on (a, g^+).
struct BogoliubovDecomposition
{
    Matrix2c V1, V2, W1, W2;
    Eigen::Vector2d r = Eigen::Vector2d::Zero();

    Matrix4c compose() const
    {
        Matrix4c left = Matrix4c::Zero();
        Matrix4c mid = Matrix4c::Zero();
        Matrix4c right = Matrix4c::Zero();
        left.block<2, 2>(0, 0) = V1;
        left.block<2, 2>(2, 2) = V2;
        right.block<2, 2>(0, 0) = W1;
        right.block<2, 2>(2, 2) = W2;
        for (int i = 0; i < 2; ++i)
        {
            mid(i, i) = std::cosh(r[i]);
            mid(i + 2, i + 2) = std::cosh(r[i]);
            mid(i, i + 2) = std::sinh(r[i]);
            mid(i + 2, i) = std::sinh(r[i]);
        }
        return left * mid * right;
    }
};

inline BogoliubovDecomposition decompose_bogoliubov(const LambdaMatrix& lam)
{
    if (lam.lambda != -1)
        throw std::invalid_argument("decompose_bogoliubov: requires an amplifying device (lambda = -1)");
    const Matrix2c l11 = lam.block(0, 0);
    const Matrix2c l12 = lam.block(0, 1);
    const Matrix2c l22 = lam.block(1, 1);

    Eigen::JacobiSVD<Matrix2c> svd(l11, Eigen::ComputeFullU | Eigen::ComputeFullV);
    BogoliubovDecomposition d;
    d.V1 = svd.matrixU();
    d.W1 = svd.matrixV().adjoint();
    for (int i = 0; i < 2; ++i)
        d.r[i] = std::acosh(std::max(1.0, svd.singularValues()[i]));

    // Rows of V1^+ L12 are sinh(r_i) times the rows of W2.
    const Matrix2c m = d.V1.adjoint() * l12;
    Eigen::Vector2d norms(m.row(0).norm(), m.row(1).norm());
    d.W2 = Matrix2c::Identity();
    const double tiny = 1e-12;
    if (norms[0] > tiny && norms[1] > tiny)
    {
        d.W2.row(0) = m.row(0) / norms[0];
        d.W2.row(1) = m.row(1) / norms[1];
    }
    else if (norms[0] > tiny || norms[1] > tiny)
    {
        const int live = norms[0] > tiny ? 0 : 1;
        const Eigen::RowVector2cd u = m.row(live) / norms[live];
        d.W2.row(live) = u;
        d.W2.row(1 - live) << -std::conj(u[1]), std::conj(u[0]);
    }
    Eigen::Vector2d cosh_r(std::cosh(d.r[0]), std::cosh(d.r[1]));
    d.V2 = l22 * d.W2.adjoint() * cosh_r.cwiseInverse().asDiagonal();

    if ((d.compose() - lam.L).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, lam.L.cwiseAbs().maxCoeff()))
        throw std::domain_error("decompose_bogoliubov: matrix is not pseudo-unitary");
    return d;
}

struct AmplifierOptions
{
    int cutoff = 25;               // photon-number cap for the field pair and for the device pair
    std::vector<int> keep{0, 1};   // modes of the returned reduced state
    double deficit_bound = 1e-6;
};

struct AmplifierResult
{
    FockDensity state;         // reduced to options.keep, per-mode cutoff options.cutoff
    double trace_deficit = 0.0;
    bool warning = false;      // trace_deficit above the configured bound
};

namespace detail
{

/// State vector over four modes with n_1 + n_2 <= N and n_3 + n_4 <= N. This truncation
/// is closed under both passive pair rotations and lowering, and raising never feeds
/// amplitude back into it from outside, so every retained amplitude is exact.
class PairTruncatedState
{
public:
    explicit PairTruncatedState(int cutoff) : n_(cutoff)
    {
        for (int t = 0; t <= n_; ++t)
            for (int a = t; a >= 0; --a)
                pairs_.push_back({a, t - a});
        pair_index_.assign(static_cast<std::size_t>((n_ + 1) * (n_ + 1)), -1);
        for (std::size_t i = 0; i < pairs_.size(); ++i)
            pair_index_[static_cast<std::size_t>(pairs_[i][0] * (n_ + 1) + pairs_[i][1])] = static_cast<int>(i);
        amp_ = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(pairs_.size() * pairs_.size()));
    }

    int cutoff() const noexcept { return n_; }
    std::size_t pair_count() const noexcept { return pairs_.size(); }
    const std::array<int, 2>& pair(std::size_t i) const { return pairs_[i]; }
    Eigen::VectorXcd& amplitudes() noexcept { return amp_; }
    const Eigen::VectorXcd& amplitudes() const noexcept { return amp_; }

    /// -1 when outside the truncation.
    Eigen::Index index(int n1, int n2, int n3, int n4) const
    {
        if (n1 < 0 || n2 < 0 || n3 < 0 || n4 < 0 || n1 + n2 > n_ || n3 + n4 > n_)
            return -1;
        const int f = pair_index_[static_cast<std::size_t>(n1 * (n_ + 1) + n2)];
        const int d = pair_index_[static_cast<std::size_t>(n3 * (n_ + 1) + n4)];
        return static_cast<Eigen::Index>(d) * static_cast<Eigen::Index>(pairs_.size()) + f;
    }

    std::array<int, 4> occupation(Eigen::Index idx) const
    {
        const auto p = static_cast<std::size_t>(idx % static_cast<Eigen::Index>(pairs_.size()));
        const auto q = static_cast<std::size_t>(idx / static_cast<Eigen::Index>(pairs_.size()));
        return {pairs_[p][0], pairs_[p][1], pairs_[q][0], pairs_[q][1]};
    }

    /// Passive rotation of the field pair (second = false) or device pair (second = true).
    void rotate_pair(const Matrix2c& map, bool second)
    {
        const Eigen::MatrixXcd m = map;
        Eigen::VectorXcd next = Eigen::VectorXcd::Zero(amp_.size());
        for (int t = 0; t <= n_; ++t)
        {
            const Eigen::MatrixXcd u = passive_block(m, t);
            const auto states = occupations_with_total(2, t);
            for (int a = 0; a <= n_; ++a)
            {
                for (int b = 0; a + b <= n_; ++b)
                {
                    // (a, b) are the occupations of the untouched pair.
                    Eigen::VectorXcd seg(static_cast<Eigen::Index>(states.size()));
                    for (std::size_t s = 0; s < states.size(); ++s)
                        seg[static_cast<Eigen::Index>(s)] = amp_[locate(states[s], a, b, second)];
                    if (seg.cwiseAbs().maxCoeff() == 0.0)
                        continue;
                    const Eigen::VectorXcd res = u * seg;
                    for (std::size_t s = 0; s < states.size(); ++s)
                        next[locate(states[s], a, b, second)] = res[static_cast<Eigen::Index>(s)];
                }
            }
        }
        amp_ = std::move(next);
    }

    /// exp(r (a_i^+ g_i^+ - a_i g_i)) via exp(t K+) cosh(r)^-(n_a + n_g + 1) exp(-t K-), t = tanh r.
    void squeeze(int i, double r)
    {
        if (r == 0.0)
            return;
        const double t = std::tanh(r);
        const double ch = std::cosh(r);
        const int fa = i;     // field mode
        const int dg = 2 + i; // device mode

        auto ladder = [](int lo, int k) {
            // sqrt((lo + k)! / lo!)
            return std::exp(0.5 * (std::lgamma(lo + k + 1.0) - std::lgamma(lo + 1.0)));
        };

        Eigen::VectorXcd lowered = Eigen::VectorXcd::Zero(amp_.size());
        for (Eigen::Index s = 0; s < amp_.size(); ++s)
        {
            auto occ = occupation(s);
            complex acc{0.0, 0.0};
            double tk = 1.0;
            double fact = 1.0;
            for (int k = 0;; ++k)
            {
                if (k > 0)
                {
                    tk *= -t;
                    fact *= k;
                }
                std::array<int, 4> src = occ;
                src[static_cast<std::size_t>(fa)] += k;
                src[static_cast<std::size_t>(dg)] += k;
                const Eigen::Index j = index(src[0], src[1], src[2], src[3]);
                if (j < 0)
                    break;
                acc += (tk / fact) * ladder(occ[static_cast<std::size_t>(fa)], k) * ladder(occ[static_cast<std::size_t>(dg)], k) * amp_[j];
            }
            lowered[s] = acc * std::pow(ch, -(occ[static_cast<std::size_t>(fa)] + occ[static_cast<std::size_t>(dg)] + 1));
        }

        Eigen::VectorXcd raised = Eigen::VectorXcd::Zero(amp_.size());
        for (Eigen::Index s = 0; s < amp_.size(); ++s)
        {
            auto occ = occupation(s);
            const int kmax = std::min(occ[static_cast<std::size_t>(fa)], occ[static_cast<std::size_t>(dg)]);
            complex acc{0.0, 0.0};
            double tk = 1.0;
            double fact = 1.0;
            for (int k = 0; k <= kmax; ++k)
            {
                if (k > 0)
                {
                    tk *= t;
                    fact *= k;
                }
                std::array<int, 4> src = occ;
                src[static_cast<std::size_t>(fa)] -= k;
                src[static_cast<std::size_t>(dg)] -= k;
                const Eigen::Index j = index(src[0], src[1], src[2], src[3]);
                acc += (tk / fact) * ladder(src[static_cast<std::size_t>(fa)], k) * ladder(src[static_cast<std::size_t>(dg)], k) * lowered[j];
            }
            raised[s] = acc;
        }
        amp_ = std::move(raised);
    }

private:
    Eigen::Index locate(const Occupation& moving, int a, int b, bool second) const
    {
        return second ? index(a, b, moving[0], moving[1]) : index(moving[0], moving[1], a, b);
    }

    int n_;
    std::vector<std::array<int, 2>> pairs_;
    std::vector<int> pair_index_;
    Eigen::VectorXcd amp_;
};

} // namespace detail

/// Amplifying-device transformation: (b, h^+) = Lambda (a, g^+) with Lambda in U(2,2).
///
/// Lambda is factored into pair rotations and two-mode squeezers, each applied exactly on a
/// truncated state vector (field-pair and device-pair photon numbers each capped at
/// options.cutoff). Mixed inputs are handled through their eigen-decomposition. The state is
/// returned reduced to options.keep; 1 - trace is the truncation deficit.
inline AmplifierResult amplifier_transform(const FockDensity& rho, const LambdaMatrix& lam, const AmplifierOptions& opt = {})
{
    if (lam.lambda != -1)
        throw std::invalid_argument("amplifier_transform: requires an amplifying device (lambda = -1)");
    if (rho.modes() != 4)
        throw std::invalid_argument("amplifier_transform: state must have four modes");
    if (opt.cutoff < 0)
        throw std::invalid_argument("amplifier_transform: cutoff must be non-negative");
    auto keep = opt.keep;
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    if (keep.empty() || keep.front() < 0 || keep.back() > 3)
        throw std::domain_error("amplifier_transform: keep must be a non-empty subset of modes 0..3");
    double out_dim = 1.0;
    for (std::size_t i = 0; i < keep.size(); ++i)
        out_dim *= opt.cutoff + 1.0;
    if (out_dim > 20000.0)
        throw std::invalid_argument("amplifier_transform: reduced state too large; keep fewer modes or lower the cutoff");

    const BogoliubovDecomposition dec = decompose_bogoliubov(lam);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho.matrix() + rho.matrix().adjoint()));
    const double pmax = es.eigenvalues().cwiseAbs().maxCoeff();

    const int n = opt.cutoff;
    const auto base = static_cast<std::size_t>(n + 1);
    AmplifierResult result{FockDensity(static_cast<int>(keep.size()), n), 0.0, false};
    double kept_weight = 0.0;
    double input_weight = 0.0;

    for (Eigen::Index e = 0; e < es.eigenvalues().size(); ++e)
    {
        const double p = es.eigenvalues()[e];
        if (p <= 1e-14 * pmax)
            continue;
        input_weight += p;
        detail::PairTruncatedState psi(n);
        for (std::size_t i = 0; i < rho.dimension(); ++i)
        {
            const complex a = es.eigenvectors()(static_cast<Eigen::Index>(i), e);
            if (std::abs(a) == 0.0)
                continue;
            const auto occ = rho.occupation(i);
            const Eigen::Index j = psi.index(occ[0], occ[1], occ[2], occ[3]);
            if (j < 0)
            {
                if (std::abs(a) > 1e-12)
                    throw CutoffError("amplifier_transform: input state exceeds the cutoff",
                                      std::max(occ[0] + occ[1], occ[2] + occ[3]));
                continue;
            }
            psi.amplitudes()[j] = a;
        }

        psi.rotate_pair(dec.W1, false);
        psi.rotate_pair(dec.W2.conjugate(), true);
        psi.squeeze(0, dec.r[0]);
        psi.squeeze(1, dec.r[1]);
        psi.rotate_pair(dec.V1, false);
        psi.rotate_pair(dec.V2.conjugate(), true);

        kept_weight += p * psi.amplitudes().squaredNorm();

        std::unordered_map<std::size_t, std::vector<std::pair<Eigen::Index, complex>>> groups;
        const auto& amp = psi.amplitudes();
        for (Eigen::Index s = 0; s < amp.size(); ++s)
        {
            if (amp[s] == complex{0.0, 0.0})
                continue;
            const auto occ = psi.occupation(s);
            std::size_t kept = 0;
            std::size_t env = 0;
            for (int mode = 0; mode < 4; ++mode)
            {
                const auto nm = static_cast<std::size_t>(occ[static_cast<std::size_t>(mode)]);
                if (std::binary_search(keep.begin(), keep.end(), mode))
                    kept = kept * base + nm;
                else
                    env = env * base + nm;
            }
            groups[env].emplace_back(static_cast<Eigen::Index>(kept), amp[s]);
        }
        auto& out = result.state.matrix();
        for (const auto& [env, members] : groups)
            for (const auto& [ki, ai] : members)
                for (const auto& [kj, aj] : members)
                    out(ki, kj) += p * ai * std::conj(aj);
    }

    result.trace_deficit = input_weight - kept_weight;
    result.warning = result.trace_deficit > opt.deficit_bound;
    return result;
}

} // namespace kkqed
