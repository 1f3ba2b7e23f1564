#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "concept_probe/run_config.hpp"
#include "concept_probe/tcav.hpp"

namespace cprobe::commands {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3, kIoError = 4 };

/// Output layout under the run's output directory.
struct Paths {
    std::filesystem::path root;

    std::filesystem::path data_dir() const { return root / "data"; }
    std::filesystem::path manifest() const { return data_dir() / "manifest.json"; }
    std::filesystem::path model() const { return root / "model.cpnn"; }
    std::filesystem::path train_log() const { return root / "train_log.csv"; }
    std::filesystem::path cav_stem(const std::string& concept_name, cav::Method m, std::uint64_t seed) const;
    std::filesystem::path sweep_stem(const std::string& concept_name, cav::Method m) const;
    std::filesystem::path summary() const { return root / "sweep" / "summary.csv"; }
    std::filesystem::path attack_csv(const std::string& concept_name, cav::Method m) const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;   // replaces the seed list
    std::optional<std::string> method;   // replaces the method list
    std::optional<double> epsilon;       // counts as an explicit override
    std::optional<std::string> out;      // wins over CONCEPT_PROBE_OUT
};

/// Default or file config, then CONCEPT_PROBE_OUT, then the flags.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_path, const Overrides& overrides);

void gen_data(const RunConfig& config, std::ostream& out);
void train(const RunConfig& config, std::ostream& out);
void build_cav(const RunConfig& config, std::size_t jobs, std::ostream& out);
std::vector<tcav::SweepReport> sweep(const RunConfig& config, std::size_t jobs, std::ostream& out);
std::vector<tcav::AttackCurve> attack(const RunConfig& config, std::ostream& out);
void report(const RunConfig& config, std::ostream& out);

inline const std::vector<std::string> kCommands = {"gen-data", "train", "build-cav", "sweep", "attack", "report"};

/// Resolves the config, runs one subcommand, and maps failures to exit
/// codes, printing the message to `err`.
int execute(const std::string& command, const std::optional<std::filesystem::path>& config_path,
            const Overrides& overrides, std::size_t jobs, std::ostream& out, std::ostream& err);

}  // namespace cprobe::commands
