#include "concept_probe/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "concept_probe/reports.hpp"
#include "concept_probe/rng.hpp"
#include "json.hpp"

namespace cprobe {

using json = nlohmann::ordered_json;

cav::Hyper RunConfig::hyper_for(const ConceptSpec& c) const {
    cav::Hyper h;
    h.epsilon = epsilon;
    h.n_draws = n_draws;
    h.n_gso_instances = n_gso_instances;
    h.K = c.K;
    h.L = L;
    return h;
}

const ConceptSpec& RunConfig::concept_spec(const std::string& name) const {
    for (const auto& c : concepts) {
        if (c.name == name) {
            return c;
        }
    }
    throw ConfigError("concept '" + name + "' is not configured");
}

RunConfig default_config() {
    RunConfig c;
    for (const auto& rc : c.recipe.concepts) {
        c.concepts.push_back({rc.name, 30});
    }
    c.methods = {cav::Method::baseline, cav::Method::adversarial, cav::Method::orthogonal_adversarial};
    for (std::uint64_t s = 0; s < 20; ++s) {
        c.seeds.push_back(s);
    }
    return c;
}

namespace {

// Reads keys off one JSON object, tracking which ones were consumed so the
// leftovers can be reported.
class Reader {
 public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + " has the wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    const json& at(const char* key) const { return j_.at(key); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.contains(k)) {
                throw ConfigError("unknown key " + field(k));
            }
        }
    }

 private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_recipe(const json& j, synthdata::DatasetRecipe& r, std::uint64_t& seed) {
    Reader rd(j, "dataset");
    rd.get("seed", seed);
    rd.get("image_size", r.image_size);
    rd.get("n_train", r.n_train);
    rd.get("n_valid", r.n_valid);
    rd.get("n_test", r.n_test);
    if (rd.has("classes")) {
        r.classes.clear();
        std::size_t i = 0;
        for (const auto& cj : rd.at("classes")) {
            Reader c(cj, "dataset.classes[" + std::to_string(i++) + "]");
            synthdata::ClassRecipe cls;
            c.get("name", cls.name);
            c.get("shape", cls.shape);
            c.get("texture", cls.texture);
            c.finish();
            r.classes.push_back(cls);
        }
    }
    if (rd.has("concepts")) {
        r.concepts.clear();
        std::size_t i = 0;
        for (const auto& cj : rd.at("concepts")) {
            Reader c(cj, "dataset.concepts[" + std::to_string(i++) + "]");
            synthdata::ConceptRecipe con;
            c.get("name", con.name);
            c.get("attribute", con.attribute);
            c.get("value", con.value);
            c.finish();
            r.concepts.push_back(con);
        }
    }
    rd.finish();
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = default_config();
    Reader rd(j, "");
    if (rd.has("dataset")) {
        read_recipe(rd.at("dataset"), c.recipe, c.data_seed);
        if (!rd.has("concepts")) {
            c.concepts.clear();
            for (const auto& rc : c.recipe.concepts) {
                c.concepts.push_back({rc.name, 30});
            }
        }
    }
    if (rd.has("model")) {
        Reader m(rd.at("model"), "model");
        m.get("seed", c.model_seed);
        m.get("epochs", c.train.epochs);
        m.get("batch_size", c.train.batch_size);
        m.get("learning_rate", c.train.learning_rate);
        m.get("momentum", c.train.momentum);
        m.finish();
    }
    if (rd.has("concepts")) {
        c.concepts.clear();
        std::size_t i = 0;
        for (const auto& cj : rd.at("concepts")) {
            ConceptSpec spec;
            if (cj.is_string()) {
                spec.name = cj.get<std::string>();
            } else {
                Reader cr(cj, "concepts[" + std::to_string(i) + "]");
                cr.get("name", spec.name);
                cr.get("K", spec.K);
                cr.finish();
            }
            ++i;
            c.concepts.push_back(spec);
        }
    }
    if (rd.has("methods")) {
        c.methods.clear();
        std::size_t i = 0;
        for (const auto& mj : rd.at("methods")) {
            try {
                c.methods.push_back(cav::parse_method(mj.get<std::string>()));
            } catch (const std::exception&) {
                throw ConfigError("methods[" + std::to_string(i) + "] is not a known method");
            }
            ++i;
        }
    }
    rd.get("epsilon", c.epsilon);
    rd.get("epsilon_override", c.epsilon_override);
    rd.get("n_draws", c.n_draws);
    rd.get("n_gso_instances", c.n_gso_instances);
    rd.get("L", c.L);
    rd.get("layer", c.layer);
    if (rd.has("seeds")) {
        const auto& sj = rd.at("seeds");
        c.seeds.clear();
        if (sj.is_object()) {
            Reader sr(sj, "seeds");
            std::uint64_t start = 0, count = 0;
            sr.get("start", start);
            sr.get("count", count);
            sr.finish();
            for (std::uint64_t s = 0; s < count; ++s) {
                c.seeds.push_back(start + s);
            }
        } else {
            rd.get("seeds", c.seeds);
        }
    }
    if (rd.has("attack")) {
        Reader a(rd.at("attack"), "attack");
        a.get("epsilon_step", c.attack.epsilon_step);
        a.get("max_steps", c.attack.max_steps);
        a.get("cav_seed", c.attack.cav_seed);
        a.finish();
    }
    if (rd.has("output_dir")) {
        std::string out;
        rd.get("output_dir", out);
        c.output_dir = out;
    }
    rd.finish();
    validate(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(reports::read_file(path));
}

void validate(const RunConfig& c) {
    try {
        synthdata::validate_recipe(c.recipe);
    } catch (const synthdata::RecipeError& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
    }
    if (c.concepts.empty()) {
        throw ConfigError("concepts must not be empty");
    }
    for (const auto& spec : c.concepts) {
        const bool known = std::any_of(c.recipe.concepts.begin(), c.recipe.concepts.end(),
                                       [&](const auto& rc) { return rc.name == spec.name; });
        if (!known) {
            throw ConfigError("concept '" + spec.name + "' is not in the dataset recipe");
        }
        if (spec.K < synthdata::kMinConceptExamples) {
            throw ConfigError("concept '" + spec.name + "': K must be at least " +
                              std::to_string(synthdata::kMinConceptExamples));
        }
    }
    if (c.methods.empty()) {
        throw ConfigError("methods must not be empty");
    }
    if (c.seeds.empty()) {
        throw ConfigError("seeds must not be empty");
    }
    const bool on_grid = std::any_of(std::begin(cav::kEpsilonGrid), std::end(cav::kEpsilonGrid),
                                     [&](double e) { return e == c.epsilon; });
    if (!on_grid && !c.epsilon_override) {
        throw ConfigError("epsilon " + std::to_string(c.epsilon) +
                          " is not in the grid {0.1, 0.01, 0.005, 0.001, 0.0001}; set epsilon_override");
    }
    if (!(c.epsilon >= 0.0)) {
        throw ConfigError("epsilon must be non-negative");
    }
    if (c.n_draws == 0 || c.L < 2 || c.n_gso_instances == 0) {
        throw ConfigError("n_draws and n_gso_instances must be positive and L at least 2");
    }
    if (!(c.attack.epsilon_step > 0.0)) {
        throw ConfigError("attack.epsilon_step must be positive");
    }
    if (c.train.epochs == 0 || c.train.batch_size == 0) {
        throw ConfigError("model.epochs and model.batch_size must be positive");
    }
}

namespace {

json canonical(const RunConfig& c, bool with_output) {
    json classes = json::array(), recipe_concepts = json::array(), concepts = json::array(),
         methods = json::array();
    for (const auto& cls : c.recipe.classes) {
        classes.push_back({{"name", cls.name}, {"shape", cls.shape}, {"texture", cls.texture}});
    }
    for (const auto& rc : c.recipe.concepts) {
        recipe_concepts.push_back({{"name", rc.name}, {"attribute", rc.attribute}, {"value", rc.value}});
    }
    for (const auto& spec : c.concepts) {
        concepts.push_back({{"name", spec.name}, {"K", spec.K}});
    }
    for (auto m : c.methods) {
        methods.push_back(reports::method_tag(m));
    }
    json j = {
        {"dataset",
         {{"seed", c.data_seed},
          {"image_size", c.recipe.image_size},
          {"n_train", c.recipe.n_train},
          {"n_valid", c.recipe.n_valid},
          {"n_test", c.recipe.n_test},
          {"classes", classes},
          {"concepts", recipe_concepts}}},
        {"model",
         {{"seed", c.model_seed},
          {"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"momentum", c.train.momentum}}},
        {"concepts", concepts},
        {"methods", methods},
        {"epsilon", c.epsilon},
        {"epsilon_override", c.epsilon_override},
        {"n_draws", c.n_draws},
        {"n_gso_instances", c.n_gso_instances},
        {"L", c.L},
        {"layer", c.layer},
        {"seeds", c.seeds},
        {"attack",
         {{"epsilon_step", c.attack.epsilon_step},
          {"max_steps", c.attack.max_steps},
          {"cav_seed", c.attack.cav_seed}}},
    };
    if (with_output) {
        j["output_dir"] = c.output_dir.string();
    }
    return j;
}

}  // namespace

std::string config_json(const RunConfig& config) {
    return canonical(config, true).dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical(config, false).dump())));
    return buf;
}

}  // namespace cprobe
