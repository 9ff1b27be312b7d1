#include "kkqed/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"kkqed: permittivity, layered-media, four-port and decay-rate calculations"};
    app.require_subcommand(1);

    kkqed::cli::Options opt;
    double tolerance = 0.0;
    std::string out_dir = ".";
    std::string config;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"eps", "permittivity table and Kramers-Kronig consistency report"},
        {"device", "four-port matrices and output photon statistics"},
        {"decay", "spontaneous-decay rates above a half-space"},
        {"verify", "fundamental-relation residuals on a layered stack"},
    };
    std::vector<CLI::Option*> tol_opts;
    for (const auto& [name, help] : commands)
    {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        tol_opts.push_back(sub->add_option("--tolerance", tolerance, "override the pass/fail threshold"));
        sub->add_option("--threads", opt.threads, "worker threads for sweeps")->capture_default_str();
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : kkqed::cli::exit_validation;
    }

    opt.config = config;
    opt.out_dir = out_dir;
    for (auto* t : tol_opts)
        if (t->count() > 0)
            opt.tolerance = tolerance;

    const std::string command = app.get_subcommands().front()->get_name();
    return kkqed::cli::run(command, opt, std::cout, std::cerr);
}
