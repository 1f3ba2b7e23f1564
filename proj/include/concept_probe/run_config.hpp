#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "concept_probe/cav.hpp"
#include "concept_probe/diffnet.hpp"
#include "concept_probe/synthdata.hpp"

namespace cprobe {

class ConfigError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

struct ConceptSpec {
    std::string name;
    std::size_t K = 30;
};

struct AttackSettings {
    double epsilon_step = 0.005;
    std::size_t max_steps = 50;
    std::uint64_t cav_seed = 0;  // seed of the CAVs the attacked set is compared against
};

struct RunConfig {
    synthdata::DatasetRecipe recipe = synthdata::default_recipe();
    std::uint64_t data_seed = 0;
    diffnet::TrainConfig train;
    std::uint64_t model_seed = 0;
    std::vector<ConceptSpec> concepts;
    std::vector<cav::Method> methods;
    double epsilon = 0.01;
    bool epsilon_override = false;  // allow epsilon outside the grid
    std::size_t n_draws = 10;
    std::size_t n_gso_instances = 3;
    std::size_t L = 30;
    std::vector<std::uint64_t> seeds;
    std::string layer = "bottleneck";
    AttackSettings attack;
    std::filesystem::path output_dir = "concept-probe-out";

    cav::Hyper hyper_for(const ConceptSpec& c) const;
    const ConceptSpec& concept_spec(const std::string& name) const;
};

/// Every concept of the default recipe with K = 30, all three methods, and
/// seeds 0..19.
RunConfig default_config();

/// Missing keys keep their defaults; unknown keys are rejected. "seeds" is a
/// list or {"start": s, "count": n}. Throws ConfigError naming the key.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError on an unknown concept, an empty seed list, an epsilon
/// off the grid without "epsilon_override", or an invalid recipe.
void validate(const RunConfig& config);

/// Canonical JSON of every field.
std::string config_json(const RunConfig& config);

/// FNV-1a of the canonical JSON with the output directory left out, as 16
/// hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace cprobe
