#include "kkqed/permittivity.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace kkqed;
using namespace testing_support;

namespace
{

// Real and imaginary parts of 1 + wp^2 / (wt^2 - w^2 - i g w), written out separately.
double lorentz_re(double wp, double wt, double g, double w)
{
    const double a = wt * wt - w * w;
    return 1.0 + wp * wp * a / (a * a + g * g * w * w);
}

double lorentz_im(double wp, double wt, double g, double w)
{
    const double a = wt * wt - w * w;
    return wp * wp * g * w / (a * a + g * g * w * w);
}

} // namespace

TEST(Lorentz, MatchesSeparatedRealAndImaginaryParts)
{
    const double wp = 2.0e15, wt = 3.0e15, g = 4.0e14;
    const LorentzModel m({{wp, wt, g}});
    for (double w : {1e13, 1e15, 2.9e15, 3e15, 3.3e15, 1e16})
    {
        const complex e = m.at(complex{w, 0.0});
        EXPECT_NEAR(e.real(), lorentz_re(wp, wt, g, w), 1e-12 * std::abs(lorentz_re(wp, wt, g, w)));
        EXPECT_NEAR(e.imag(), lorentz_im(wp, wt, g, w), 1e-12 * std::abs(lorentz_im(wp, wt, g, w)) + 1e-300);
    }
}

TEST(Lorentz, StaticResonanceAndHighFrequencyLimits)
{
    const double wp = 1.3, wt = 2.0, g = 0.2;
    const PermittivityModel m = LorentzModel({{wp, wt, g}});
    const complex e0 = eval_eps(m, 0.0);
    EXPECT_DOUBLE_EQ(e0.real(), 1.0 + wp * wp / (wt * wt));
    EXPECT_EQ(e0.imag(), 0.0);

    const complex er = eval_eps(m, wt);
    EXPECT_NEAR(er.real(), 1.0, 1e-15);
    EXPECT_NEAR(er.imag(), wp * wp / (g * wt), 1e-14);

    EXPECT_LT(std::abs(eval_eps(m, 1e6 * wt) - 1.0), 1e-12);
    EXPECT_LT(std::abs(eval_eps(m, 1e3 * wt) - 1.0), 1e-4);
}

TEST(Lorentz, Reality)
{
    auto g = rng(11);
    for (int trial = 0; trial < 50; ++trial)
    {
        const auto m = random_lorentz(g, 1 + trial % 3, 1.0);
        for (double w : {0.1, 0.7, 1.3, 5.0})
        {
            const complex plus = m.at(complex{w, 0.0});
            const complex minus = m.at(complex{-w, 0.0});
            EXPECT_NEAR(std::abs(std::conj(minus) - plus), 0.0, 1e-14);
        }
    }
}

TEST(Lorentz, PassivityOnPositiveFrequencies)
{
    auto g = rng(12);
    const auto grid = log_grid(1e-4, 1e4, 400);
    for (int trial = 0; trial < 100; ++trial)
    {
        const auto m = random_lorentz(g, 1 + trial % 3, 1.0);
        for (double w : grid)
            ASSERT_GT(m.at(complex{w, 0.0}).imag(), 0.0) << "w = " << w;
    }
}

TEST(Lorentz, RejectsInvalidTerms)
{
    EXPECT_THROW(LorentzModel({{1.0, 1.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW(LorentzModel({{1.0, 1.0, -0.1}}), std::invalid_argument);
    EXPECT_THROW(LorentzModel({{-1.0, 1.0, 0.1}}), std::invalid_argument);
    EXPECT_THROW(LorentzModel({{1.0, -1.0, 0.1}}), std::invalid_argument);
    const LorentzModel drude({{1.0, 0.0, 0.1}});
    EXPECT_THROW(drude.at(complex{0.0, 0.0}), std::domain_error);
    EXPECT_NO_THROW(drude.at(complex{1.0, 0.0}));
}

TEST(Tabulated, InterpolatesLinearlyAndRejectsOutOfGrid)
{
    const TabulatedModel t({1.0, 2.0, 4.0}, {{2.0, 0.0}, {4.0, 1.0}, {0.0, 3.0}});
    EXPECT_EQ(t.at(1.0), complex(2.0, 0.0));
    EXPECT_EQ(t.at(4.0), complex(0.0, 3.0));
    EXPECT_NEAR(std::abs(t.at(1.5) - complex(3.0, 0.5)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(t.at(3.0) - complex(2.0, 2.0)), 0.0, 1e-15);
    EXPECT_THROW(t.at(0.5), std::range_error);
    EXPECT_THROW(t.at(4.5), std::range_error);
    EXPECT_THROW(eval_eps(PermittivityModel{t}, 5.0), std::range_error);
}

TEST(Tabulated, ValidatesConstruction)
{
    EXPECT_THROW(TabulatedModel({1.0}, {{1.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW(TabulatedModel({1.0, 2.0}, {{1.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW(TabulatedModel({2.0, 1.0}, {{1.0, 0.0}, {1.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW(TabulatedModel({1.0, 1.0}, {{1.0, 0.0}, {1.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW(TabulatedModel({1.0, 2.0}, {{std::nan(""), 0.0}, {1.0, 0.0}}), std::invalid_argument);
}

TEST(KramersKronig, ZeroAbsorptionGivesZero)
{
    const auto grid = log_grid(0.01, 100.0, 200);
    const std::vector<double> imag(grid.size(), 0.0);
    const auto est = kk_real_from_imag(grid, imag, 1.0);
    EXPECT_EQ(est.value, 0.0);
    EXPECT_EQ(est.tail_bound, 0.0);
}

TEST(KramersKronig, SingleLorentzBelowAndAboveResonance)
{
    const double wt = 1.0, wp = 1.0, g = 0.1;
    const auto grid = log_grid(1e-3 * wt, 1e3 * wt, 30001);
    std::vector<double> imag;
    for (double w : grid)
        imag.push_back(lorentz_im(wp, wt, g, w));
    for (double w : {0.5 * wt, 2.0 * wt})
    {
        const double exact = lorentz_re(wp, wt, g, w) - 1.0;
        const auto est = kk_real_from_imag(grid, imag, w);
        EXPECT_NEAR(est.value, exact, 0.01 * std::abs(exact)) << "w = " << w;
    }
}

TEST(KramersKronig, EvaluationOnGridNodeIsRegular)
{
    const double wt = 1.0, wp = 1.0, g = 0.1;
    const auto grid = log_grid(1e-3, 1e3, 20001);
    std::vector<double> imag;
    for (double w : grid)
        imag.push_back(lorentz_im(wp, wt, g, w));
    const double node = grid[12000];
    const auto est = kk_real_from_imag(grid, imag, node);
    ASSERT_TRUE(std::isfinite(est.value));
    const double exact = lorentz_re(wp, wt, g, node) - 1.0;
    EXPECT_NEAR(est.value, exact, 0.01 * std::abs(exact));
}

TEST(KramersKronig, TailBoundShrinksWithWiderGrid)
{
    const LorentzModel m({{1.0, 1.0, 0.2}});
    auto bound = [&](double lo, double hi) {
        const auto grid = log_grid(lo, hi, 4000);
        std::vector<double> imag;
        for (double w : grid)
            imag.push_back(m.at(complex{w, 0.0}).imag());
        const auto est = kk_real_from_imag(grid, imag, 1.0);
        const double err = std::abs(est.value - (m.at(complex{1.0, 0.0}).real() - 1.0));
        return std::pair{est.tail_bound, err};
    };
    const auto [narrow, narrow_err] = bound(0.2, 5.0);
    const auto [wide, wide_err] = bound(0.01, 100.0);
    EXPECT_GT(narrow, 0.0);
    EXPECT_LT(wide, narrow);
    EXPECT_LT(wide_err, narrow_err);
}

TEST(KramersKronig, RequiresInteriorEvaluation)
{
    const std::vector<double> grid{1.0, 2.0, 3.0};
    const std::vector<double> imag{0.0, 0.1, 0.0};
    EXPECT_THROW(kk_real_from_imag(grid, imag, 1.0), std::domain_error);
    EXPECT_THROW(kk_real_from_imag(grid, imag, 3.5), std::domain_error);
    EXPECT_THROW(kk_real_from_imag(grid, std::vector<double>{0.0}, 2.0), std::invalid_argument);
}

TEST(KramersKronig, RandomLorentzRoundTrip)
{
    auto g = rng(21);
    for (int trial = 0; trial < 20; ++trial)
    {
        const auto m = random_lorentz(g, 1 + trial % 3, 1.0);
        const auto grid = log_grid(1e-3, 1e3, 200);
        const auto rep = causality_report(m, grid);
        EXPECT_LT(rep.max_deviation, 0.01) << "trial " << trial;
        EXPECT_TRUE(rep.consistent);
    }
}

TEST(Causality, VacuumHasZeroDeviation)
{
    const auto grid = log_grid(1e12, 1e16, 100);
    const auto rep = causality_report(vacuum(), grid);
    EXPECT_EQ(rep.max_deviation, 0.0);
    EXPECT_TRUE(rep.consistent);
}

TEST(Causality, SignFlippedTableIsFlagged)
{
    const LorentzModel m({{1.0, 1.0, 0.1}, {0.5, 3.0, 0.3}});
    const auto fine = log_grid(1e-3, 1e3, 6000);
    std::vector<complex> good, flipped;
    for (double w : fine)
    {
        const complex e = m.at(complex{w, 0.0});
        good.push_back(e);
        flipped.push_back({-e.real(), e.imag()});
    }
    const auto grid = log_grid(1e-2, 1e2, 150);
    const auto ok = causality_report(TabulatedModel(fine, good), grid);
    const auto bad = causality_report(TabulatedModel(fine, flipped), grid);
    EXPECT_LT(ok.max_deviation, 0.01);
    EXPECT_GT(bad.max_deviation, 0.1);
    EXPECT_FALSE(bad.consistent);
}

TEST(GammaDecompose, IsotropicAndDiagonalCases)
{
    const auto iso = gamma_decompose(TensorPermittivity(0.5 * Eigen::Matrix3d::Identity()));
    EXPECT_LT((iso.gamma_minus - std::sqrt(0.5) * Eigen::Matrix3d::Identity()).norm(), 1e-15);
    EXPECT_EQ(iso.gamma_plus.norm(), 0.0);

    const auto amp = gamma_decompose(TensorPermittivity(-0.25 * Eigen::Matrix3d::Identity()));
    EXPECT_EQ(amp.gamma_minus.norm(), 0.0);
    EXPECT_LT((amp.gamma_plus - 0.5 * Eigen::Matrix3d::Identity()).norm(), 1e-15);

    const auto mixed = gamma_decompose(TensorPermittivity(Eigen::Vector3d(0.25, -0.09, 0.0).asDiagonal()));
    EXPECT_LT((mixed.gamma_minus - Eigen::Matrix3d(Eigen::Vector3d(0.5, 0.0, 0.0).asDiagonal())).norm(), 1e-15);
    EXPECT_LT((mixed.gamma_plus - Eigen::Matrix3d(Eigen::Vector3d(0.0, 0.3, 0.0).asDiagonal())).norm(), 1e-15);
}

TEST(GammaDecompose, RejectsAsymmetricTensor)
{
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 1) = 0.1;
    EXPECT_THROW(TensorPermittivity{m}, std::invalid_argument);
}

TEST(GammaDecompose, RandomSymmetricReconstructionAndRotationCovariance)
{
    auto g = rng(31);
    for (int trial = 0; trial < 1000; ++trial)
    {
        Eigen::Matrix3d q = Eigen::Matrix3d::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                q(i, j) = uniform(g, -1.0, 1.0);
        const Eigen::Matrix3d o = Eigen::HouseholderQR<Eigen::Matrix3d>(q).householderQ();
        // Eigenvalues of every sign pattern, sometimes with an exact zero.
        Eigen::Vector3d lam(uniform(g, -1.0, 1.0), uniform(g, -1.0, 1.0), trial % 5 == 0 ? 0.0 : uniform(g, -1.0, 1.0));
        const Eigen::Matrix3d raw = o * lam.asDiagonal() * o.transpose();
        const Eigen::Matrix3d eps = 0.5 * (raw + raw.transpose());
        const auto gp = gamma_decompose(TensorPermittivity(eps));
        const Eigen::Matrix3d recon = gp.gamma_minus * gp.gamma_minus.transpose() - gp.gamma_plus * gp.gamma_plus.transpose();
        ASSERT_LT((recon - eps).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
        ASSERT_LT((gp.gamma_minus * gp.gamma_plus.transpose()).cwiseAbs().maxCoeff(), 1e-12);

        Eigen::Matrix3d q2;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                q2(i, j) = uniform(g, -1.0, 1.0);
        const Eigen::Matrix3d r = Eigen::HouseholderQR<Eigen::Matrix3d>(q2).householderQ();
        const Eigen::Matrix3d rotated_raw = r * eps * r.transpose();
        const auto gr = gamma_decompose(TensorPermittivity(0.5 * (rotated_raw + rotated_raw.transpose())));
        ASSERT_LT((r.transpose() * gr.gamma_minus * r - gp.gamma_minus).cwiseAbs().maxCoeff(), 1e-12);
        ASSERT_LT((r.transpose() * gr.gamma_plus * r - gp.gamma_plus).cwiseAbs().maxCoeff(), 1e-12);
    }
}
