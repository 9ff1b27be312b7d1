#include "kkqed/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace kkqed;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace
{

class CliTest : public ::testing::Test
{
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("kkqed_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text)
    {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }
    fs::path write(const std::string& name, const json& j) { return write(name, j.dump(2)); }

    int run(const std::string& cmd, const fs::path& config, const std::string& out = "out", std::optional<double> tol = {})
    {
        cli::Options opt;
        opt.config = config;
        opt.out_dir = dir_ / out;
        opt.tolerance = tol;
        opt.threads = 2;
        log_.str("");
        err_.str("");
        return cli::run(cmd, opt, log_, err_);
    }

    json summary(const std::string& file, const std::string& out = "out") const
    {
        std::ifstream in(dir_ / out / file);
        return json::parse(in);
    }

    json error() const { return json::parse(err_.str()); }

    std::vector<std::vector<std::string>> csv(const std::string& file, const std::string& out = "out") const
    {
        std::ifstream in(dir_ / out / file);
        std::vector<std::vector<std::string>> rows;
        std::string line;
        while (std::getline(in, line))
        {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string c;
            while (std::getline(ss, c, ','))
                cells.push_back(c);
            if (!line.empty() && line.back() == ',')
                cells.emplace_back();
            rows.push_back(cells);
        }
        return rows;
    }

    fs::path dir_;
    std::ostringstream log_;
    std::ostringstream err_;
};

const json lorentz = {{"type", "lorentz"}, {"terms", {{1.5e15, 2.0e15, 2.0e14}}}};

/// Lossless quarter-wave slab in vacuum with |r|^2 = |t|^2 = 1/2 at 1 um.
json balanced_stack()
{
    const double s = 1.0 / std::sqrt(2.0);
    const double eps = (1.0 + s) / (1.0 - s);
    const double lambda = 1e-6;
    return {{"left_cladding", {{"type", "vacuum"}}},
            {"right_cladding", {{"type", "vacuum"}}},
            {"layers", {{{"thickness_m", lambda / (4.0 * std::sqrt(eps))}, {"material", {{"type", "constant"}, {"eps", {eps, 0.0}}}}}}}};
}

const double omega_1um = 2.0 * pi * PhysicalConstants::c / 1e-6;

} // namespace

TEST_F(CliTest, EpsLorentzSweep)
{
    const json cfg = {{"material", lorentz}, {"sweep", {{"omega_min_rad_s", 1e13}, {"omega_max_rad_s", 1e17}, {"points", 200}}}};
    EXPECT_EQ(run("eps", write("eps.json", cfg)), cli::exit_success) << err_.str();
    const auto rows = csv("eps.csv");
    ASSERT_EQ(rows.size(), 201u);
    EXPECT_EQ(rows[0][0], "omega_rad_s");
    const auto s = summary("eps_summary.json");
    EXPECT_LT(s.at("max_kk_residual_rel").get<double>(), 0.01);
    EXPECT_TRUE(s.contains("tail_truncation_bound_rel"));
    EXPECT_TRUE(s.at("consistent").get<bool>());
}

TEST_F(CliTest, EpsVacuumHasZeroResiduals)
{
    const json cfg = {{"material", {{"type", "vacuum"}}}, {"sweep", {{"omega_min_rad_s", 1e13}, {"omega_max_rad_s", 1e16}, {"points", 50}}}};
    EXPECT_EQ(run("eps", write("eps.json", cfg)), cli::exit_success);
    const auto rows = csv("eps.csv");
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!rows[i][4].empty())
            EXPECT_EQ(std::stod(rows[i][4]), 0.0);
    EXPECT_EQ(summary("eps_summary.json").at("max_kk_residual_rel").get<double>(), 0.0);
}

TEST_F(CliTest, EpsNonCausalTableFailsThreshold)
{
    std::vector<double> grid, re, im;
    for (int i = 0; i < 400; ++i)
    {
        const double w = 1e13 * std::pow(1e4, i / 399.0);
        const complex e = LorentzModel({{1.5e15, 2.0e15, 2.0e14}}).at(complex{w, 0.0});
        grid.push_back(w);
        re.push_back(2.0 - e.real());
        im.push_back(e.imag());
    }
    const json cfg = {{"material", {{"type", "tabulated"}, {"grid", grid}, {"re", re}, {"im", im}}}, {"sweep", {{"omega_min_rad_s", 1e13}, {"omega_max_rad_s", 1e17}}}};
    EXPECT_EQ(run("eps", write("eps.json", cfg)), cli::exit_threshold);
    EXPECT_FALSE(summary("eps_summary.json").at("consistent").get<bool>());
}

TEST_F(CliTest, OutputIsByteIdenticalAcrossRuns)
{
    const json cfg = {{"material", lorentz}, {"sweep", {{"omega_min_rad_s", 1e13}, {"omega_max_rad_s", 1e17}, {"points", 60}}}};
    const auto p = write("eps.json", cfg);
    ASSERT_EQ(run("eps", p, "a"), 0);
    ASSERT_EQ(run("eps", p, "b"), 0);
    auto slurp = [&](const fs::path& f) {
        std::ifstream in(f, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(dir_ / "a" / "eps.csv"), slurp(dir_ / "b" / "eps.csv"));
    // 17 significant digits
    EXPECT_NE(slurp(dir_ / "a" / "eps.csv").find("10000000000000"), std::string::npos);
}

TEST_F(CliTest, DeviceBalancedStackCoincidence)
{
    const json cfg = {{"stack", balanced_stack()}, {"omega_rad_s", omega_1um}, {"input", {{"fock", {1, 1}}}}};
    ASSERT_EQ(run("device", write("dev.json", cfg)), cli::exit_success) << err_.str();
    const auto s = summary("device.json");
    EXPECT_LT(s.at("group_residual").get<double>(), 1e-10);
    for (const auto* ch : {"0", "1"})
    {
        const auto p = s.at("distributions").at(ch).at("probabilities").get<std::vector<double>>();
        ASSERT_EQ(p.size(), 3u);
        EXPECT_NEAR(p[0], 0.5, 1e-10);
        EXPECT_NEAR(p[1], 0.0, 1e-10);
        EXPECT_NEAR(p[2], 0.5, 1e-10);
    }
}

TEST_F(CliTest, DeviceTwoPhotonBinomial)
{
    const json cfg = {{"stack", balanced_stack()}, {"omega_rad_s", omega_1um}, {"input", {{"fock", {2, 0}}}}, {"save_state", true}};
    ASSERT_EQ(run("device", write("dev.json", cfg)), cli::exit_success) << err_.str();
    const auto p = summary("device.json").at("distributions").at("0").at("probabilities").get<std::vector<double>>();
    EXPECT_NEAR(p[0], 0.25, 1e-10);
    EXPECT_NEAR(p[1], 0.5, 1e-10);
    EXPECT_NEAR(p[2], 0.25, 1e-10);
    const auto st = io::state_from_json(summary("device_state.json"), "state");
    EXPECT_EQ(st.modes(), 2);
    EXPECT_NEAR(st.trace(), 1.0, 1e-12);
}

TEST_F(CliTest, DeviceLiteralMatrices)
{
    const json cfg = {{"matrices", {{"T", {{0.5, 0.5}, {-0.5, 0.5}}}, {"lambda", 1}}}, {"omega_rad_s", 1e15}, {"input", {{"fock", {1, 0}}}}};
    ASSERT_EQ(run("device", write("dev.json", cfg)), cli::exit_success) << err_.str();
    const auto p = summary("device.json").at("distributions").at("0").at("probabilities").get<std::vector<double>>();
    EXPECT_NEAR(p[1], 0.25, 1e-12);
}

TEST_F(CliTest, DeviceAmplifierVacuum)
{
    const json cfg = {{"amplifier", {{"gain_r", 0.2}}}, {"omega_rad_s", 1e15}, {"cutoff", 20}};
    ASSERT_EQ(run("device", write("dev.json", cfg)), cli::exit_success) << err_.str();
    const auto s = summary("device.json");
    EXPECT_TRUE(s.contains("trace_deficit"));
    const double mean = s.at("distributions").at("0").at("mean_photons").get<double>();
    EXPECT_NEAR(mean, std::sinh(0.2) * std::sinh(0.2), 1e-6);
    EXPECT_FALSE(s.at("truncation_warning").get<bool>());
}

TEST_F(CliTest, DeviceRefusesSmallCutoff)
{
    const json cfg = {{"stack", balanced_stack()}, {"omega_rad_s", omega_1um}, {"input", {{"fock", {2, 1}}}}, {"cutoff", 2}};
    EXPECT_EQ(run("device", write("dev.json", cfg)), cli::exit_validation);
    const auto e = error();
    EXPECT_EQ(e.at("kind"), "cutoff");
    EXPECT_EQ(e.at("required_cutoff").get<int>(), 3);
    EXPECT_NE(e.at("message").get<std::string>().find("3"), std::string::npos);
}

TEST_F(CliTest, DeviceRejectsAmbiguousSource)
{
    const json cfg = {{"stack", balanced_stack()}, {"amplifier", {{"gain_r", 0.2}}}, {"omega_rad_s", 1e15}};
    EXPECT_EQ(run("device", write("dev.json", cfg)), cli::exit_io);
}

TEST_F(CliTest, DecaySweepMatchesLimits)
{
    const json cfg = {{"material", {{"type", "constant"}, {"eps", {2.0, 0.5}}}},
                      {"omega_rad_s", 2.5e15},
                      {"z_sweep", {{"zk_min", 1e-3}, {"zk_max", 1e3}, {"points", 13}}}};
    ASSERT_EQ(run("decay", write("decay.json", cfg)), cli::exit_success) << err_.str();
    const auto rows = csv("decay.csv");
    ASSERT_EQ(rows.size(), 14u);
    const auto first = rows[1];
    const auto last = rows.back();
    EXPECT_NEAR(std::stod(last[1]), 1e3, 1e-9);
    EXPECT_NEAR(std::stod(last[2]), 1.0, 0.01);
    EXPECT_NEAR(std::stod(last[3]), 1.0, 0.01);
    for (std::size_t i = 1; i < rows.size(); ++i)
    {
        if (std::stod(rows[i][1]) > 1e-2 * (1.0 + 1e-12))
            continue;
        EXPECT_NEAR(std::stod(rows[i][2]) / std::stod(rows[i][4]), 1.0, 0.05);
        EXPECT_NEAR(std::stod(rows[i][3]) / std::stod(rows[i][5]), 1.0, 0.05);
    }
    EXPECT_NEAR(std::stod(first[2]) / std::stod(first[3]), 2.0, 0.01);
    const auto s = summary("decay_summary.json");
    EXPECT_EQ(s.at("matching_rows").get<int>(), 3);
}

TEST_F(CliTest, DecaySurfaceModePoleIsStructuredError)
{
    const json cfg = {{"material", {{"type", "constant"}, {"eps", {-1.0, 0.0}}}},
                      {"omega_rad_s", 2.5e15},
                      {"z_sweep", {{"zk_min", 1e-3}, {"zk_max", 1e-2}, {"points", 3}}}};
    EXPECT_EQ(run("decay", write("decay.json", cfg)), cli::exit_validation);
    EXPECT_EQ(error().at("kind"), "divergence");
}

TEST_F(CliTest, VerifyUniformAbsorber)
{
    const json mat = {{"type", "constant"}, {"eps", {2.0, 0.3}}};
    const json cfg = {{"stack", {{"left_cladding", mat}, {"right_cladding", mat}, {"layers", json::array()}}},
                      {"omega_rad_s", 1e15},
                      {"points", {{0.0, 0.0}, {1e-7, 3e-7}}},
                      {"refinement_check", false}};
    EXPECT_EQ(run("verify", write("verify.json", cfg)), cli::exit_success) << err_.str();
    EXPECT_LT(summary("verify_summary.json").at("max_residual_rel").get<double>(), 1e-3);
}

TEST_F(CliTest, VerifyRefinementDecreases)
{
    const json cfg = {{"stack",
                       {{"left_cladding", {{"type", "vacuum"}}},
                        {"right_cladding", {{"type", "vacuum"}}},
                        {"layers", {{{"thickness_m", 1.5e-6}, {"material", {{"type", "constant"}, {"eps", {4.0, 0.5}}}}}}}}},
                      {"omega_rad_s", PhysicalConstants::c * 1e6},
                      {"points", {{0.75e-6, 0.75e-6}}},
                      {"window_absorption", 0.2},
                      {"gauss_order", 2},
                      {"nodes_per_wavelength", 16},
                      {"tolerance", 1e-2},
                      {"refinement_check", true}};
    EXPECT_EQ(run("verify", write("verify.json", cfg)), cli::exit_success) << err_.str();
    EXPECT_TRUE(summary("verify_summary.json").at("refinement_decreases_residual").get<bool>());
}

TEST_F(CliTest, VerifyLosslessStackHasDistinctExit)
{
    const json cfg = {{"stack", balanced_stack()}, {"omega_rad_s", omega_1um}, {"points", {{1e-7, 1e-7}}}};
    EXPECT_EQ(run("verify", write("verify.json", cfg)), cli::exit_lossless_diagnostic);
    const auto s = summary("verify_summary.json");
    EXPECT_TRUE(s.at("boundary_flux_regime").get<bool>());
    EXPECT_TRUE(s.at("lossless_everywhere").get<bool>());
}

TEST_F(CliTest, ParseErrorReportsLine)
{
    const auto p = write("bad.json", std::string("{\n  \"material\": {\"type\": \"vacuum\"},\n  \"sweep\": {,\n}\n"));
    EXPECT_EQ(run("eps", p), cli::exit_io);
    EXPECT_EQ(error().at("kind"), "parse");
    EXPECT_EQ(error().at("line").get<int>(), 3);
}

TEST_F(CliTest, MalformedMaterialFileReportsLine)
{
    write("mat.json", std::string("{\n\"type\": \"lorentz\",\n\"terms\": [[1, 2, 3]\n"));
    const json cfg = {{"material", "mat.json"}, {"sweep", {{"omega_min_rad_s", 1.0}, {"omega_max_rad_s", 10.0}}}};
    EXPECT_EQ(run("eps", write("eps.json", cfg)), cli::exit_io);
    EXPECT_EQ(error().at("kind"), "parse");
    EXPECT_GE(error().at("line").get<int>(), 3);
}

TEST_F(CliTest, MissingConfigIsIoError)
{
    EXPECT_EQ(run("eps", dir_ / "nope.json"), cli::exit_io);
    EXPECT_EQ(error().at("kind"), "io");
}

TEST_F(CliTest, UnknownCommandAndBadValues)
{
    const json cfg = {{"material", {{"type", "vacuum"}}}, {"sweep", {{"omega_min_rad_s", 10.0}, {"omega_max_rad_s", 1.0}}}};
    const auto p = write("eps.json", cfg);
    EXPECT_EQ(run("frobnicate", p), cli::exit_validation);
    EXPECT_NE(run("eps", p), cli::exit_success);
}

TEST_F(CliTest, MaterialSearchPathFromEnvironment)
{
    const fs::path lib = dir_ / "lib";
    fs::create_directories(lib);
    std::ofstream(lib / "drude_like.json") << lorentz.dump();
    ::setenv(io::material_path_env, lib.c_str(), 1);
    const json cfg = {{"material", "drude_like.json"}, {"sweep", {{"omega_min_rad_s", 1e13}, {"omega_max_rad_s", 1e17}, {"points", 50}}}};
    EXPECT_EQ(run("eps", write("eps.json", cfg)), cli::exit_success) << err_.str();
    ::unsetenv(io::material_path_env);
    EXPECT_EQ(run("eps", write("eps.json", cfg)), cli::exit_io);
}

TEST_F(CliTest, ToleranceFlagOverridesConfig)
{
    const json cfg = {{"material", lorentz}, {"sweep", {{"omega_min_rad_s", 1e13}, {"omega_max_rad_s", 1e17}, {"points", 60}}}};
    EXPECT_EQ(run("eps", write("eps.json", cfg), "out", 1e-14), cli::exit_threshold);
}
