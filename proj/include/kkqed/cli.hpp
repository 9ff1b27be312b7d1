#pragma once

#include "decay.hpp"
#include "fockspace.hpp"
#include "fourport.hpp"
#include "io.hpp"
#include "layered1d.hpp"
#include "permittivity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace kkqed::cli
{

using io::json;
namespace fs = std::filesystem;

enum ExitCode : int
{
    exit_success = 0,
    exit_validation = 1,
    exit_threshold = 2,
    exit_io = 3,
    exit_lossless_diagnostic = 4,
};

struct Options
{
    fs::path config;
    fs::path out_dir = ".";
    std::optional<double> tolerance;
    int threads = 1;
};

struct Outcome
{
    int exit_code = exit_success;
    json summary;
};

/// Runs f(i) for i in [0, n) on up to `threads` workers. Results must be written to
/// per-index slots; the first exception is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& f)
{
    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
    if (workers == 1 || n < 2)
    {
        for (std::size_t i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w)
    {
        pool.emplace_back([&, w] {
            (void)w;
            for (std::size_t i = next++; i < n && !failed; i = next++)
            {
                try
                {
                    f(i);
                }
                catch (...)
                {
                    if (!failed.exchange(true))
                        failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

inline std::vector<double> sweep_values(double lo, double hi, int points, bool log_spacing, const std::string& ctx)
{
    if (points < 1)
        throw io::ParseError(ctx + ": points must be positive");
    if (!(lo > 0.0 || !log_spacing) || !(hi >= lo) || (points > 1 && !(hi > lo)))
        throw io::ParseError(ctx + ": sweep range must be non-empty and ordered" + std::string(log_spacing ? " (and positive for log spacing)" : ""));
    std::vector<double> v(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
    {
        const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        v[static_cast<std::size_t>(i)] = log_spacing ? lo * std::pow(hi / lo, f) : lo + f * (hi - lo);
    }
    v.back() = hi;
    return v;
}

inline bool log_spacing_of(const json& sweep, const std::string& ctx)
{
    if (!sweep.contains("spacing"))
        return true;
    const json& s = sweep.at("spacing");
    if (s == "log")
        return true;
    if (s == "linear")
        return false;
    throw io::ParseError(ctx + ".spacing: expected \"log\" or \"linear\"");
}

// ---------------------------------------------------------------------------
// eps: permittivity table and causality report
// ---------------------------------------------------------------------------

inline Outcome cmd_eps(const json& cfg, const fs::path& base, const Options& opt)
{
    const PermittivityModel model = io::material_ref(io::require(cfg, "material", "config"), base, "config.material");
    const json& sweep = io::require(cfg, "sweep", "config");
    const auto grid = sweep_values(io::number_at(sweep, "omega_min_rad_s", "config.sweep"), io::number_at(sweep, "omega_max_rad_s", "config.sweep"),
                                   io::int_or(sweep, "points", 200, "config.sweep"), log_spacing_of(sweep, "config.sweep"), "config.sweep");

    CausalityOptions copt;
    copt.tolerance = opt.tolerance.value_or(io::number_or(cfg, "tolerance", copt.tolerance, "config"));
    copt.interior_fraction = io::number_or(cfg, "interior_fraction", copt.interior_fraction, "config");
    copt.quadrature_points_per_decade = io::int_or(cfg, "quadrature_points_per_decade", copt.quadrature_points_per_decade, "config");

    const CausalityReport rep = causality_report(model, grid, copt);

    io::CsvWriter csv({"omega_rad_s", "eps_real", "eps_imag", "kk_eps_real", "kk_residual_rel"});
    for (std::size_t i = 0; i < grid.size(); ++i)
        csv.row({rep.omega[i], rep.eps[i].real(), rep.eps[i].imag(), rep.kk_real[i], rep.residual[i]});
    csv.save(opt.out_dir / "eps.csv");

    Outcome out;
    out.summary = {{"command", "eps"},
                   {"points", grid.size()},
                   {"tolerance", copt.tolerance},
                   {"interior_fraction", copt.interior_fraction},
                   {"max_kk_residual_rel", rep.max_deviation},
                   {"residual_scale", rep.scale},
                   {"tail_truncation_bound_rel", rep.tail_bound},
                   {"consistent", rep.consistent}};
    io::write_json_file(opt.out_dir / "eps_summary.json", out.summary);
    out.exit_code = rep.consistent ? exit_success : exit_threshold;
    return out;
}

// ---------------------------------------------------------------------------
// device: T, A, Lambda and output statistics
// ---------------------------------------------------------------------------

inline DeviceMatrices device_from_config(const json& cfg, const fs::path& base, double omega)
{
    DeviceMatrices dev;
    dev.omega = omega;
    const int sources = static_cast<int>(cfg.contains("stack")) + static_cast<int>(cfg.contains("matrices")) + static_cast<int>(cfg.contains("amplifier"));
    if (sources != 1)
        throw io::ParseError("config: give exactly one of 'stack', 'matrices' or 'amplifier'");

    if (cfg.contains("stack"))
    {
        const auto pair = scattering_amplitudes(io::stack_ref(cfg.at("stack"), base, "config.stack"), omega);
        dev.T = pair.T;
        dev.A = pair.A;
        dev.lambda = pair.lambda;
    }
    else if (cfg.contains("matrices"))
    {
        const json& m = cfg.at("matrices");
        dev.T = io::as_matrix2(io::require(m, "T", "config.matrices"), "config.matrices.T");
        dev.lambda = io::int_or(m, "lambda", 1, "config.matrices");
        if (dev.lambda != 1 && dev.lambda != -1)
            throw io::ParseError("config.matrices.lambda: must be 1 or -1");
        if (m.contains("A"))
            dev.A = io::as_matrix2(m.at("A"), "config.matrices.A");
        else
        {
            const Matrix2c tt = dev.T * dev.T.adjoint();
            dev.A = hermitian_sqrt(dev.lambda == 1 ? Matrix2c(Matrix2c::Identity() - tt) : Matrix2c(tt - Matrix2c::Identity()));
        }
    }
    else
    {
        const json& a = cfg.at("amplifier");
        const json& r = io::require(a, "gain_r", "config.amplifier");
        double r1 = 0.0;
        double r2 = 0.0;
        if (r.is_array() && r.size() == 2)
        {
            r1 = io::as_number(r[0], "config.amplifier.gain_r[0]");
            r2 = io::as_number(r[1], "config.amplifier.gain_r[1]");
        }
        else
            r1 = r2 = io::as_number(r, "config.amplifier.gain_r");
        if (r1 < 0.0 || r2 < 0.0)
            throw io::ParseError("config.amplifier.gain_r: must be non-negative");
        dev.lambda = -1;
        dev.T = Eigen::Vector2cd(std::cosh(r1), std::cosh(r2)).asDiagonal();
        dev.A = Eigen::Vector2cd(std::sinh(r1), std::sinh(r2)).asDiagonal();
    }
    return dev;
}

inline Outcome cmd_device(const json& cfg, const fs::path& base, const Options& opt)
{
    const double omega = io::number_at(cfg, "omega_rad_s", "config");
    const DeviceMatrices dev = device_from_config(cfg, base, omega);
    const LambdaMatrix lam = build_lambda(dev);
    const GroupResidual group = check_group(lam);
    const double tol = opt.tolerance.value_or(io::number_or(cfg, "tolerance", 1e-10, "config"));

    const InputSpec input = cfg.contains("input") ? io::input_from_json(cfg.at("input"), "config.input") : InputSpec{};
    std::vector<int> channels{0, 1};
    if (cfg.contains("channels"))
    {
        channels.clear();
        for (const auto& c : cfg.at("channels"))
        {
            const int ch = io::as_int(c, "config.channels[]");
            if (ch < 0 || ch > 1)
                throw io::ParseError("config.channels: field channels are 0 and 1");
            channels.push_back(ch);
        }
    }

    Outcome out;
    out.summary = {{"command", "device"},
                   {"omega_rad_s", omega},
                   {"lambda", dev.lambda},
                   {"T", io::to_json(dev.T)},
                   {"A", io::to_json(dev.A)},
                   {"Lambda", io::to_json(lam.L)},
                   {"group_residual", group.isometry},
                   {"det_abs_minus_one", group.det_deviation}};

    io::CsvWriter csv({"channel", "photons", "probability"});
    json dists = json::object();
    std::optional<FockDensity> reduced;

    if (dev.lambda == 1)
    {
        const int need = std::max(1, input.total_photons());
        const int cutoff = io::int_or(cfg, "cutoff", need, "config");
        if (cutoff < need)
            throw CutoffError("cutoff " + std::to_string(cutoff) + " is too small: the input carries up to " + std::to_string(need) +
                                  " photons, so cutoff >= " + std::to_string(need) + " is required",
                              need);
        const FockDensity out_state = passive_transform(make_input_state(input, cutoff), lam);
        reduced = partial_trace(out_state, {0, 1});
        for (int ch : channels)
        {
            const auto d = output_channel_distribution(dev.T, input, ch);
            const auto p = partial_trace(out_state, {ch}).populations();
            json entry = {{"probabilities", p}, {"closed_form", d.closed_form ? json(d.p) : json(nullptr)}};
            if (d.closed_form)
            {
                double dev_max = 0.0;
                for (std::size_t k = 0; k < p.size(); ++k)
                    dev_max = std::max(dev_max, std::abs(p[k] - (k < d.p.size() ? d.p[k] : 0.0)));
                entry["closed_form_deviation"] = dev_max;
            }
            dists[std::to_string(ch)] = entry;
            for (std::size_t k = 0; k < p.size(); ++k)
                csv.row({static_cast<double>(ch), static_cast<double>(k), p[k]});
        }
    }
    else
    {
        AmplifierOptions aopt;
        aopt.cutoff = io::int_or(cfg, "cutoff", aopt.cutoff, "config");
        aopt.keep = {0, 1};
        const int in_cut = std::max(1, [&] {
            int m = 0;
            for (std::size_t c = 0; c < 4; ++c)
                m = std::max(m, input.max_photons(c));
            return m;
        }());
        const AmplifierResult res = amplifier_transform(make_input_state(input, in_cut), lam, aopt);
        reduced = res.state;
        out.summary["cutoff"] = aopt.cutoff;
        out.summary["trace_deficit"] = res.trace_deficit;
        out.summary["truncation_warning"] = res.warning;
        for (int ch : channels)
        {
            const auto p = partial_trace(res.state, {ch}).populations();
            dists[std::to_string(ch)] = {{"probabilities", p}, {"mean_photons", res.state.mean_photon_number(ch)}};
            for (std::size_t k = 0; k < p.size(); ++k)
                csv.row({static_cast<double>(ch), static_cast<double>(k), p[k]});
        }
    }
    out.summary["distributions"] = dists;
    csv.save(opt.out_dir / "device_distributions.csv");
    if (cfg.value("save_state", false))
        io::write_json_file(opt.out_dir / "device_state.json", io::state_to_json(*reduced));
    io::write_json_file(opt.out_dir / "device.json", out.summary);
    out.exit_code = group.isometry <= tol ? exit_success : exit_threshold;
    return out;
}

// ---------------------------------------------------------------------------
// decay: rates above a half-space
// ---------------------------------------------------------------------------

inline Outcome cmd_decay(const json& cfg, const fs::path& base, const Options& opt)
{
    const PermittivityModel model = io::material_ref(io::require(cfg, "material", "config"), base, "config.material");
    const double omega = io::number_at(cfg, "omega_rad_s", "config");
    const double mu = io::number_or(cfg, "dipole_moment_C_m", 1e-29, "config");
    const complex eps = eval_eps(model, omega);
    if (eps == complex{-1.0, 0.0})
        throw SurfaceResonanceError("eps(omega_A) = -1: surface-mode pole, the near-surface rate diverges");

    const double k = omega / PhysicalConstants::c;
    const json& sweep = io::require(cfg, "z_sweep", "config");
    const int points = io::int_or(sweep, "points", 25, "config.z_sweep");
    std::vector<double> zs;
    if (sweep.contains("zk_min"))
    {
        zs = sweep_values(io::number_at(sweep, "zk_min", "config.z_sweep"), io::number_at(sweep, "zk_max", "config.z_sweep"), points, true, "config.z_sweep");
        for (double& z : zs)
            z /= k;
    }
    else
        zs = sweep_values(io::number_at(sweep, "z_min_m", "config.z_sweep"), io::number_at(sweep, "z_max_m", "config.z_sweep"), points, true, "config.z_sweep");

    const double tol = opt.tolerance.value_or(io::number_or(cfg, "tolerance", 0.05, "config"));
    const double match_zk = io::number_or(cfg, "matching_zk_max", 1e-2, "config");

    struct Row
    {
        double perp, par, asym_perp, asym_par, err;
        bool converged;
    };
    std::vector<Row> rows(zs.size());
    parallel_for(zs.size(), opt.threads, [&](std::size_t i) {
        const auto g = im_green_halfspace(eps, zs[i], omega);
        const Dipole dz{Eigen::Vector3d(0.0, 0.0, mu), omega, zs[i]};
        const Dipole dx{Eigen::Vector3d(mu, 0.0, 0.0), omega, zs[i]};
        const double g0 = gamma_free_space(dz);
        rows[i] = {gamma_rate(g, dz) / g0, gamma_rate(g, dx) / g0, gamma_near_surface(eps, dz) / g0, gamma_near_surface(eps, dx) / g0,
                   std::max(g.error_zz, g.error_xx) / g.free_part, g.converged};
    });

    io::CsvWriter csv({"z_m", "z_omega_over_c", "gamma_perp_over_gamma0", "gamma_par_over_gamma0", "asymptote_perp_over_gamma0",
                       "asymptote_par_over_gamma0", "quadrature_error_rel"});
    double match_dev = 0.0;
    int match_rows = 0;
    bool converged = true;
    for (std::size_t i = 0; i < zs.size(); ++i)
    {
        const auto& r = rows[i];
        csv.row({zs[i], zs[i] * k, r.perp, r.par, r.asym_perp, r.asym_par, r.err});
        converged = converged && r.converged;
        if (zs[i] * k <= match_zk && eps.imag() > 0.0)
        {
            match_dev = std::max({match_dev, std::abs(r.perp / r.asym_perp - 1.0), std::abs(r.par / r.asym_par - 1.0)});
            ++match_rows;
        }
    }
    csv.save(opt.out_dir / "decay.csv");

    Outcome out;
    const auto far = std::max_element(zs.begin(), zs.end()) - zs.begin();
    out.summary = {{"command", "decay"},
                   {"omega_rad_s", omega},
                   {"eps", io::to_json(eps)},
                   {"rows", zs.size()},
                   {"matching_zk_max", match_zk},
                   {"matching_rows", match_rows},
                   {"matching_max_deviation", match_dev},
                   {"tolerance", tol},
                   {"far_field_zk", zs[static_cast<std::size_t>(far)] * k},
                   {"far_field_perp_over_gamma0", rows[static_cast<std::size_t>(far)].perp},
                   {"far_field_par_over_gamma0", rows[static_cast<std::size_t>(far)].par},
                   {"quadrature_converged", converged}};
    io::write_json_file(opt.out_dir / "decay_summary.json", out.summary);
    out.exit_code = (match_dev <= tol && converged) ? exit_success : exit_threshold;
    return out;
}

// ---------------------------------------------------------------------------
// verify: fundamental relation on a stack
// ---------------------------------------------------------------------------

inline Outcome cmd_verify(const json& cfg, const fs::path& base, const Options& opt)
{
    const DielectricStack stack = io::stack_ref(io::require(cfg, "stack", "config"), base, "config.stack");
    const double omega = io::number_at(cfg, "omega_rad_s", "config");
    FundamentalRelationOptions fopt;
    fopt.nodes_per_wavelength = io::int_or(cfg, "nodes_per_wavelength", fopt.nodes_per_wavelength, "config");
    fopt.gauss_order = io::int_or(cfg, "gauss_order", fopt.gauss_order, "config");
    fopt.window_absorption = io::number_or(cfg, "window_absorption", 0.0, "config");
    const double tol = opt.tolerance.value_or(io::number_or(cfg, "tolerance", 1e-3, "config"));
    const bool refine = cfg.value("refinement_check", false);

    const json& pts = io::require(cfg, "points", "config");
    if (!pts.is_array() || pts.empty())
        throw io::ParseError("config.points: expected a non-empty list of [x_m, xp_m]");
    std::vector<std::pair<double, double>> xs;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        const std::string c = "config.points[" + std::to_string(i) + "]";
        if (!pts[i].is_array() || pts[i].size() != 2)
            throw io::ParseError(c + ": expected [x_m, xp_m]");
        xs.emplace_back(io::as_number(pts[i][0], c), io::as_number(pts[i][1], c));
    }

    std::vector<FundamentalRelationReport> reps(xs.size());
    std::vector<FundamentalRelationReport> fine(refine ? xs.size() : 0);
    parallel_for(xs.size(), opt.threads, [&](std::size_t i) {
        reps[i] = verify_fundamental_relation(stack, xs[i].first, xs[i].second, omega, fopt);
        if (refine)
        {
            auto f2 = fopt;
            f2.nodes_per_wavelength *= 2;
            fine[i] = verify_fundamental_relation(stack, xs[i].first, xs[i].second, omega, f2);
        }
    });

    io::CsvWriter csv({"x_m", "xp_m", "im_green_m", "volume_integral_re_m", "tail_integral_re_m", "boundary_flux_re_m", "residual_rel",
                       "flux_closed_residual_rel", "quadrature_nodes"});
    double worst = 0.0;
    bool flux_regime = false;
    bool lossless = false;
    bool decreasing = true;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        const auto& r = reps[i];
        csv.row({xs[i].first, xs[i].second, r.im_green, r.volume_integral.real(), r.tail_integral.real(), r.boundary_flux.real(), r.residual,
                 r.flux_closed_residual, static_cast<double>(r.quadrature_nodes)});
        flux_regime = flux_regime || r.boundary_flux_regime;
        lossless = lossless || r.lossless_everywhere;
        const double judged = r.boundary_flux_regime ? r.flux_closed_residual : r.residual;
        worst = std::max(worst, judged);
        if (refine)
        {
            const double judged_fine = fine[i].boundary_flux_regime ? fine[i].flux_closed_residual : fine[i].residual;
            decreasing = decreasing && (judged_fine < judged || judged == 0.0);
        }
    }
    csv.save(opt.out_dir / "verify.csv");

    Outcome out;
    out.summary = {{"command", "verify"},
                   {"omega_rad_s", omega},
                   {"points", xs.size()},
                   {"tolerance", tol},
                   {"max_residual_rel", worst},
                   {"boundary_flux_regime", flux_regime},
                   {"lossless_everywhere", lossless}};
    if (flux_regime)
        out.summary["diagnostic"] = "boundary-flux regime: a cladding is lossless, residual judged with the escaping flux included";
    if (refine)
        out.summary["refinement_decreases_residual"] = decreasing;
    io::write_json_file(opt.out_dir / "verify_summary.json", out.summary);

    if (worst > tol || (refine && !decreasing))
        out.exit_code = exit_threshold;
    else if (lossless)
        out.exit_code = exit_lossless_diagnostic;
    return out;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline json error_json(const std::string& kind, const std::string& message, int code)
{
    return {{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
}

/// Runs one subcommand; every failure is mapped to an exit code and reported as a JSON
/// object on `err`.
inline int run(const std::string& command, const Options& opt, std::ostream& log, std::ostream& err)
{
    auto fail = [&](const std::string& kind, const std::string& message, int code) {
        err << error_json(kind, message, code).dump() << "\n";
        return code;
    };
    try
    {
        if (opt.threads < 1)
            return fail("validation", "--threads must be at least 1", exit_validation);
        const json cfg = io::read_json_file(opt.config);
        const fs::path base = opt.config.has_parent_path() ? opt.config.parent_path() : fs::path(".");
        fs::create_directories(opt.out_dir);

        Outcome out;
        if (command == "eps")
            out = cmd_eps(cfg, base, opt);
        else if (command == "device")
            out = cmd_device(cfg, base, opt);
        else if (command == "decay")
            out = cmd_decay(cfg, base, opt);
        else if (command == "verify")
            out = cmd_verify(cfg, base, opt);
        else
            return fail("validation", "unknown command '" + command + "'", exit_validation);
        log << out.summary.dump(2) << "\n";
        return out.exit_code;
    }
    catch (const io::ParseError& e)
    {
        json j = error_json("parse", e.what(), exit_io);
        if (e.line() > 0)
            j["line"] = e.line();
        err << j.dump() << "\n";
        return exit_io;
    }
    catch (const io::IoError& e)
    {
        return fail("io", e.what(), exit_io);
    }
    catch (const fs::filesystem_error& e)
    {
        return fail("io", e.what(), exit_io);
    }
    catch (const SurfaceResonanceError& e)
    {
        return fail("divergence", e.what(), exit_validation);
    }
    catch (const CutoffError& e)
    {
        json j = error_json("cutoff", e.what(), exit_validation);
        j["required_cutoff"] = e.required_cutoff();
        err << j.dump() << "\n";
        return exit_validation;
    }
    catch (const std::exception& e)
    {
        return fail("validation", e.what(), exit_validation);
    }
}

} // namespace kkqed::cli
