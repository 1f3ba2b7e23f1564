#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "concept_probe/commands.hpp"

int main(int argc, char** argv) {
    namespace cmd = cprobe::commands;

    CLI::App app{"Concept activation vectors over a toy CNN: data, training, CAVs, sweeps, attacks"};
    app.require_subcommand(1);

    std::optional<std::string> config;
    cmd::Overrides overrides;
    std::size_t jobs = 0;
    app.add_option("--config", config, "JSON run configuration (defaults apply when omitted)");
    app.add_option("--seed", overrides.seed, "run a single seed instead of the configured list");
    app.add_option("--method", overrides.method, "tcav, a-tcav or oa-tcav");
    app.add_option("--epsilon", overrides.epsilon, "adversarial step, accepted off the grid");
    app.add_option("--out", overrides.out, "output directory (overrides CONCEPT_PROBE_OUT)");
    app.add_option("--jobs", jobs, "worker threads for per-seed work (0 = all cores)");

    const std::pair<const char*, const char*> subcommands[] = {
        {"gen-data", "render the synthetic dataset and concept sets"},
        {"train", "train the toy CNN and write the model and training log"},
        {"build-cav", "build one CAV per concept, method and seed"},
        {"sweep", "recall sweep over seeds for every concept and method"},
        {"attack", "adversarial-distance curves for TCAV and A-TCAV"},
        {"report", "rebuild the summary table from sweep reports"},
    };
    // Global options are accepted after the subcommand too.
    app.fallthrough();
    for (const auto& [name, help] : subcommands) {
        app.add_subcommand(name, help);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cmd::kConfigError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    std::optional<std::filesystem::path> config_path;
    if (config) {
        config_path = *config;
    }
    return cmd::execute(command, config_path, overrides, jobs, std::cout, std::cerr);
}
