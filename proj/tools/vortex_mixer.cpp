// vortex-mixer <subcommand> --config <path> [--seed <u64>] [--out <dir>]
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vortex_mixer/runner.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "root seed, overrides the config");
    sub->add_option("--out", c.out, "output directory, overrides output.path");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral Galerkin simulator and diagnostics for stochastic 2D Navier-Stokes on the torus"};
    app.set_version_flag("--version", vortex::kArtifactVersion);
    app.require_subcommand(1);
    app.footer(std::string("Worker threads: set ") + vortex::kWorkersEnv +
               ".\nExit status: 0 pass, 2 flagged but complete, 1 error.");

    Common common;
    std::string check;
    for (const char* name : {"simulate", "couple", "gradient", "validate-noise"}) add_common(app.add_subcommand(name), common);
    CLI::App* diag = app.add_subcommand("diagnose", "moment, Lyapunov, mixing or invariant-measure checks");
    add_common(diag, common);
    diag->add_option("--check", check, "which diagnostic")
        ->required()
        ->check(CLI::IsMember({"moments", "lyapunov", "mixing", "invariant"}));
    app.get_subcommand("simulate")->description("sample trajectories and write the state stream");
    app.get_subcommand("couple")->description("controlled coupling pairs: contraction, Girsanov weights, p1 and a");
    app.get_subcommand("gradient")->description("Malliavin and finite-difference gradient estimates");
    app.get_subcommand("validate-noise")->description("sample the noise hypotheses");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : vortex::kExitError;
    }

    try {
        vortex::RunContext cx;
        cx.subcommand = app.get_subcommands().front()->get_name();
        cx.check = check;
        cx.config = vortex::load_config(common.config);
        if (common.seed) cx.config.seed = *common.seed;
        if (common.out) cx.config.output.path = *common.out;
        cx.out_dir = cx.config.output.path;
        return vortex::dispatch(cx);
    } catch (const vortex::ConfigError& e) {
        std::cerr << "vortex-mixer: invalid config\n";
        for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
        return vortex::kExitError;
    } catch (const std::exception& e) {
        std::cerr << "vortex-mixer: " << e.what() << "\n";
        return vortex::kExitError;
    }
}
