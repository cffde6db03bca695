// shrinkproj command line: solve / list-scenarios / verify.
//
// Exit codes: 0 converged and audits passed, 1 usage or I/O error,
// 2 audit failure, 3 solver non-convergence.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shrinkproj/scenario.hpp"

using namespace shrinkproj;

namespace {

constexpr int kUsage = 1;
constexpr int kAudit = 2;

void print_report(const RunReport& rep)
{
    std::printf("scenario   %s\n", rep.scenario.c_str());
    std::printf("outcome    %s\n", to_string(rep.outcome));
    if (!rep.error.empty()) {
        std::printf("error      %s\n", rep.error.c_str());
    }
    std::printf("iterations %d\n", rep.iterations);
    std::printf("x*         [");
    for (Eigen::Index i = 0; i < rep.x_star.size(); ++i) {
        std::printf("%s%.10g", i ? ", " : "", rep.x_star[i]);
    }
    std::printf("]\n");
    for (const auto& inv : rep.invariants) {
        if (inv.worst) {
            std::printf("  %-20s %-4s worst %.3e (limit %.1e)\n", inv.name.c_str(), inv.ok ? "ok" : "FAIL", *inv.worst,
                        inv.limit);
        } else {
            std::printf("  %-20s n/a\n", inv.name.c_str());
        }
    }
    std::printf("wall time  %.3f s\n", rep.wall_seconds);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hybrid shrinking-projection solver for mixed equilibrium and common J-fixed point problems"};
    app.require_subcommand(1);

    std::string scenario;
    std::string out_dir;
    std::optional<int> max_iter;
    std::optional<double> tol;
    std::optional<std::uint64_t> seed;
    std::string mode;

    auto* solve = app.add_subcommand("solve", "Run a scenario and write its iteration CSV and JSON summary");
    solve->add_option("--scenario", scenario, "Built-in scenario name or path to a JSON document")->required();
    solve->add_option("--out", out_dir, "Directory for <name>.csv and <name>.json");
    solve->add_option("--max-iter", max_iter, "Override config.max_outer")->check(CLI::NonNegativeNumber);
    solve->add_option("--tol", tol, "Override config.outer_tol")->check(CLI::NonNegativeNumber);
    solve->add_option("--seed", seed, "Override the scenario seed");
    solve->add_option("--mode", mode, "Override config.mode")->check(CLI::IsMember({"hilbert", "banach"}));

    auto* list = app.add_subcommand("list-scenarios", "List the built-in scenarios");

    std::string verify_name;
    auto* verify = app.add_subcommand("verify", "Run the invariant audit suites for a scenario");
    verify->add_option("--scenario", verify_name, "Built-in scenario name or path to a JSON document")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        if (*list) {
            for (const auto& s : builtin_scenarios()) {
                std::printf("%-18s d=%d p=%g mode=%s\n", s.name.c_str(), s.dimension, s.p,
                            s.config.mode == Mode::HilbertMain ? "hilbert" : "banach");
            }
            return 0;
        }

        if (*verify) {
            const ScenarioSpec spec = load_scenario(verify_name);
            bool ok = true;
            for (const auto& suite : verify_scenario(spec)) {
                std::printf("%-4s %s (%.2f s): %s\n", suite.passed() ? "PASS" : "FAIL", suite.name.c_str(),
                            suite.seconds, suite.summary().c_str());
                ok = ok && suite.passed();
            }
            return ok ? 0 : kAudit;
        }

        ScenarioSpec spec = load_scenario(scenario);
        if (max_iter) {
            spec.config.max_outer = *max_iter;
        }
        if (tol) {
            spec.config.outer_tol = *tol;
        }
        if (seed) {
            spec.seed = *seed;
        }
        if (!mode.empty()) {
            spec.config.mode = mode == "hilbert" ? Mode::HilbertMain : Mode::BanachMain2;
        }
        // overrides can break the spec; check before running
        build_problem(spec);
        const RunReport rep = run_scenario(spec);
        print_report(rep);
        if (!out_dir.empty()) {
            const auto paths = emit_report(rep, out_dir);
            std::printf("wrote      %s\n           %s\n", paths.csv.string().c_str(), paths.summary.string().c_str());
        }
        return exit_code(rep);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
}
