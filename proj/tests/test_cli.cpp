#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "concept_probe/commands.hpp"
#include "concept_probe/dataset_io.hpp"
#include "concept_probe/reports.hpp"
#include "json.hpp"
#include "support/world.hpp"

using namespace cprobe;
using commands::execute;
using commands::Overrides;
using commands::Paths;
using reports::read_file;
using reports::write_file;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSmallConfig = R"({
  "dataset": {"seed": 3, "n_train": 30, "n_valid": 8, "n_test": 10},
  "model": {"seed": 1, "epochs": 2, "batch_size": 16},
  "concepts": [{"name": "stripes", "K": 10}, {"name": "circle", "K": 10}, {"name": "triangle", "K": 10}],
  "n_draws": 2,
  "L": 10,
  "seeds": {"start": 0, "count": 2},
  "attack": {"epsilon_step": 0.01, "max_steps": 4}
})";

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::create_directories(dir);
    write_file(dir / "config.json", text);
    return dir / "config.json";
}

int run(const std::string& cmd, const fs::path& config, const fs::path& out, std::size_t jobs = 1) {
    Overrides o;
    o.out = out.string();
    std::ostringstream so, se;
    return execute(cmd, config, o, jobs, so, se);
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

// gen-data, train and sweep of the small config, shared by several tests.
const fs::path& small_run() {
    static const fs::path root = [] {
        const auto dir = testing_support::scratch_dir("cli-small");
        const auto cfg = write_config(dir, kSmallConfig);
        for (const char* cmd : {"gen-data", "train", "sweep", "attack"}) {
            if (run(cmd, cfg, dir / "out") != 0) throw std::runtime_error(std::string("small run failed at ") + cmd);
        }
        return dir;
    }();
    return root;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
    const auto c = default_config();
    EXPECT_NO_THROW(validate(c));
    EXPECT_EQ(c.concepts.size(), 3u);
    EXPECT_EQ(c.methods.size(), 3u);
    EXPECT_EQ(c.seeds.size(), 20u);
    EXPECT_EQ(c.epsilon, 0.01);
    EXPECT_EQ(c.n_draws, 10u);
}

TEST(Config, ParsesNestedKeys) {
    const auto c = parse_config(kSmallConfig);
    EXPECT_EQ(c.data_seed, 3u);
    EXPECT_EQ(c.recipe.n_train, 30u);
    EXPECT_EQ(c.train.epochs, 2u);
    EXPECT_EQ(c.concepts[1].name, "circle");
    EXPECT_EQ(c.concepts[1].K, 10u);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1}));
    EXPECT_EQ(c.attack.max_steps, 4u);
    EXPECT_EQ(c.hyper_for(c.concepts[0]).K, 10u);
    EXPECT_EQ(c.hyper_for(c.concepts[0]).n_draws, 2u);
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(parse_config(R"({"epsilon": 0.02})"), ConfigError);
    EXPECT_NO_THROW(parse_config(R"({"epsilon": 0.02, "epsilon_override": true})"));
    EXPECT_THROW(parse_config(R"({"colour": 1})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"model": {"epochz": 1}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"concepts": ["dots"]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"concepts": [{"name": "circle", "K": 9}]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"seeds": []})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"methods": ["best"]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"L": "many"})"), ConfigError);
    EXPECT_THROW(parse_config("{"), ConfigError);
}

TEST(Config, HashIgnoresOutputDirOnly) {
    auto a = default_config();
    auto b = a;
    b.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    b.epsilon = 0.005;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(parse_config(config_json(a))), config_hash(a));
}

TEST(Config, OverridePrecedence) {
    ::setenv("CONCEPT_PROBE_OUT", "from-env", 1);
    Overrides none;
    EXPECT_EQ(commands::resolve_config(std::nullopt, none).output_dir, "from-env");
    Overrides o;
    o.out = "from-flag";
    o.seed = 7;
    o.method = "oa-tcav";
    o.epsilon = 0.02;
    const auto c = commands::resolve_config(std::nullopt, o);
    ::unsetenv("CONCEPT_PROBE_OUT");
    EXPECT_EQ(c.output_dir, "from-flag");
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7}));
    EXPECT_EQ(c.methods, (std::vector<cav::Method>{cav::Method::orthogonal_adversarial}));
    EXPECT_EQ(c.epsilon, 0.02);
    EXPECT_TRUE(c.epsilon_override);
    EXPECT_EQ(commands::resolve_config(std::nullopt, Overrides{}).output_dir, "concept-probe-out");
}

TEST(Execute, ExitCodes) {
    const auto dir = testing_support::scratch_dir("cli-codes");
    std::ostringstream so, se;
    EXPECT_EQ(run("sweep", write_config(dir, "{}"), dir / "nothing"), commands::kIoError);
    EXPECT_EQ(run("train", write_config(dir / "bad", R"({"epsilon": 0.3})"), dir / "out"), commands::kConfigError);
    EXPECT_EQ(run("frobnicate", write_config(dir, "{}"), dir / "out"), commands::kConfigError);
    EXPECT_EQ(run("train", dir / "missing.json", dir / "out"), commands::kIoError);
    Overrides bad;
    bad.method = "nope";
    EXPECT_EQ(execute("sweep", std::nullopt, bad, 1, so, se), commands::kConfigError);
    EXPECT_FALSE(se.str().empty());
}

TEST(Execute, EmptyTestSetIsNumericFailure) {
    const auto& root = small_run();
    const auto copy = testing_support::scratch_dir("cli-empty-test");
    fs::copy(root / "out", copy / "out", fs::copy_options::recursive);
    const auto manifest = Paths{copy / "out"}.manifest();
    auto m = nlohmann::json::parse(read_file(manifest));
    nlohmann::json kept = nlohmann::json::array();
    for (const auto& e : m["images"]) {
        if (e["split"] != "test") kept.push_back(e);
    }
    m["images"] = kept;
    write_file(manifest, m.dump(2));
    EXPECT_EQ(run("sweep", root / "config.json", copy / "out"), commands::kNumericError);
}

TEST(EndToEnd, SweepOutputs) {
    const auto& root = small_run();
    const Paths p{root / "out"};
    const auto cfg = load_config(root / "config.json");
    const auto hash = config_hash(cfg);
    std::size_t n_reports = 0;
    for (const auto& spec : cfg.concepts) {
        for (auto m : cfg.methods) {
            const auto stem = p.sweep_stem(spec.name, m);
            const auto csv = lines(read_file(fs::path(stem).concat(".csv")));
            ASSERT_EQ(csv.size(), 2u + cfg.seeds.size());
            EXPECT_EQ(csv[0], reports::provenance_line(hash));
            EXPECT_EQ(csv[1], "seed,method,concept,recall_percent");
            EXPECT_TRUE(fs::exists(fs::path(stem).concat(".json")));
            ++n_reports;
        }
    }
    EXPECT_EQ(n_reports, 9u);
    const auto summary = lines(read_file(p.summary()));
    ASSERT_EQ(summary.size(), 6u);
    EXPECT_EQ(summary[1].rfind("statistic,stripes:TCAV,stripes:A-TCAV,stripes:OA-TCAV,circle:TCAV", 0), 0u);
}

TEST(EndToEnd, SummaryMatchesPerSeedAggregates) {
    const auto& root = small_run();
    const Paths p{root / "out"};
    const auto cfg = load_config(root / "config.json");
    std::vector<tcav::SweepReport> rs;
    for (const auto& spec : cfg.concepts) {
        for (auto m : cfg.methods) {
            auto r = reports::parse_sweep_json(read_file(fs::path(p.sweep_stem(spec.name, m)).concat(".json")));
            const auto again = tcav::aggregate(r.recalls());
            EXPECT_NEAR(again.mean, r.aggregates.mean, 1e-9);
            EXPECT_NEAR(again.std, r.aggregates.std, 1e-9);
            rs.push_back(std::move(r));
        }
    }
    EXPECT_EQ(read_file(p.summary()), reports::summary_csv(rs, config_hash(cfg)));
}

TEST(EndToEnd, RerunIsByteIdentical) {
    const auto& root = small_run();
    const auto again = testing_support::scratch_dir("cli-rerun");
    for (const char* cmd : {"gen-data", "train", "sweep"}) {
        ASSERT_EQ(run(cmd, root / "config.json", again / "out", 2), 0) << cmd;
    }
    const auto a = Paths{root / "out"}, b = Paths{again / "out"};
    EXPECT_EQ(read_file(a.manifest()), read_file(b.manifest()));
    EXPECT_EQ(read_file(a.model()), read_file(b.model()));
    EXPECT_EQ(read_file(a.train_log()), read_file(b.train_log()));
    EXPECT_EQ(read_file(a.summary()), read_file(b.summary()));
    for (const auto& entry : fs::directory_iterator(a.root / "sweep")) {
        EXPECT_EQ(read_file(entry.path()), read_file(b.root / "sweep" / entry.path().filename()))
            << entry.path().filename();
    }
}

TEST(EndToEnd, ReportRebuildsSummary) {
    const auto& root = small_run();
    const Paths p{root / "out"};
    const auto before = read_file(p.summary());
    fs::remove(p.summary());
    ASSERT_EQ(run("report", root / "config.json", p.root), 0);
    EXPECT_EQ(read_file(p.summary()), before);
}

TEST(EndToEnd, BuildCavWritesEveryCombination) {
    const auto& root = small_run();
    const auto cfg = load_config(root / "config.json");
    ASSERT_EQ(run("build-cav", root / "config.json", root / "out", 2), 0);
    const Paths p{root / "out"};
    for (const auto& spec : cfg.concepts) {
        for (auto m : cfg.methods) {
            for (auto s : cfg.seeds) {
                const auto c = cav::load_cav(fs::path(p.cav_stem(spec.name, m, s)).concat(".json"));
                EXPECT_EQ(c.method, m);
                EXPECT_NEAR(linalg::norm(c.direction), 1.0, 1e-9);
            }
        }
    }
}

TEST(EndToEnd, TrainLogAndModelReload) {
    const auto& root = small_run();
    const Paths p{root / "out"};
    const auto cfg = load_config(root / "config.json");
    const auto log = lines(read_file(p.train_log()));
    ASSERT_EQ(log.size(), 2u + cfg.train.epochs);
    EXPECT_EQ(log[1], "epoch,train_loss,train_accuracy,valid_loss,valid_accuracy,test_loss,test_accuracy");
    const auto model = diffnet::load_model(p.model());
    const auto bundle = read_dataset(p.manifest());
    const auto reloaded = diffnet::load_model(p.model());
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(model.forward(bundle.dataset.images[i * 7]), reloaded.forward(bundle.dataset.images[i * 7]));
    }
    const double acc = diffnet::evaluate(model, bundle.dataset, Split::valid).second;
    EXPECT_EQ(acc, model.training_meta().valid_accuracy);
    // valid_accuracy is the fifth column of the last epoch row.
    std::vector<std::string> cols;
    std::istringstream row(log.back());
    for (std::string f; std::getline(row, f, ',');) cols.push_back(f);
    ASSERT_EQ(cols.size(), 7u);
    EXPECT_EQ(cols[4], reports::fmt(acc));
}

TEST(EndToEnd, AttackCurvesShareLevels) {
    const auto& root = small_run();
    const Paths p{root / "out"};
    const auto cfg = load_config(root / "config.json");
    for (const auto& spec : cfg.concepts) {
        const auto a = lines(read_file(p.attack_csv(spec.name, cav::Method::baseline)));
        const auto b = lines(read_file(p.attack_csv(spec.name, cav::Method::adversarial)));
        ASSERT_EQ(a.size(), b.size());
        ASSERT_GE(a.size(), 3u);
        EXPECT_EQ(a[1], "level,mean_distance,frac_misclassified");
        EXPECT_NE(a[0].find("method=tcav"), std::string::npos);
        EXPECT_NE(b[0].find("method=a-tcav"), std::string::npos);
        for (std::size_t i = 2; i < a.size(); ++i) {
            EXPECT_EQ(a[i].substr(0, a[i].find(',')), b[i].substr(0, b[i].find(',')));
            EXPECT_EQ(a[i].substr(a[i].rfind(',')), b[i].substr(b[i].rfind(',')));
        }
    }
}

TEST(EndToEnd, DefaultManifestLayout) {
    const auto& w = testing_support::default_world();
    const auto dir = testing_support::scratch_dir("cli-default-data");
    auto cfg = w.config;
    cfg.output_dir = dir / "out";
    std::ostringstream so;
    commands::gen_data(cfg, so);
    const auto text = read_file(Paths{cfg.output_dir}.manifest());
    const auto m = nlohmann::json::parse(text);
    std::map<std::size_t, std::size_t> per_class;
    for (const auto& e : m["images"]) ++per_class[e["label"].get<std::size_t>()];
    ASSERT_EQ(per_class.size(), 4u);
    for (const auto& [cls, n] : per_class) EXPECT_EQ(n, 400u) << cls;
    commands::gen_data(cfg, so);
    EXPECT_EQ(read_file(Paths{cfg.output_dir}.manifest()), text);
}
