#include "concept_probe/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <thread>

#include "concept_probe/dataset_io.hpp"
#include "concept_probe/linalg.hpp"
#include "concept_probe/reports.hpp"
#include "json.hpp"

namespace cprobe::commands {

namespace fs = std::filesystem;

fs::path Paths::cav_stem(const std::string& concept_name, cav::Method m, std::uint64_t seed) const {
    return root / "cavs" / (concept_name + "__" + std::string(reports::method_tag(m)) + "__seed" + std::to_string(seed));
}

fs::path Paths::sweep_stem(const std::string& concept_name, cav::Method m) const {
    return root / "sweep" / (concept_name + "__" + std::string(reports::method_tag(m)));
}

fs::path Paths::attack_csv(const std::string& concept_name, cav::Method m) const {
    return root / "attack" / (concept_name + "__" + std::string(reports::method_tag(m)) + ".csv");
}

RunConfig resolve_config(const std::optional<fs::path>& config_path, const Overrides& o) {
    RunConfig c = config_path ? load_config(*config_path) : default_config();
    if (const char* env = std::getenv("CONCEPT_PROBE_OUT"); env != nullptr && *env != '\0') {
        c.output_dir = env;
    }
    if (o.out) {
        c.output_dir = *o.out;
    }
    if (o.seed) {
        c.seeds = {*o.seed};
    }
    if (o.method) {
        try {
            c.methods = {cav::parse_method(*o.method)};
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (o.epsilon) {
        c.epsilon = *o.epsilon;
        c.epsilon_override = true;
    }
    validate(c);
    return c;
}

namespace {

std::string provenance_json(const RunConfig& c) {
    const nlohmann::ordered_json j = {
        {"tool", "concept-probe"}, {"version", reports::kToolVersion}, {"config_hash", config_hash(c)},
        {"seed", c.data_seed}};
    return j.dump();
}

DatasetBundle load_bundle(const RunConfig& c) {
    const Paths p{c.output_dir};
    if (!fs::exists(p.manifest())) {
        throw IoError("dataset manifest " + p.manifest().string() + " not found; run gen-data first");
    }
    return read_dataset(p.manifest());
}

diffnet::Model load_trained(const RunConfig& c) {
    const Paths p{c.output_dir};
    if (!fs::exists(p.model())) {
        throw IoError("model " + p.model().string() + " not found; run train first");
    }
    return diffnet::load_model(p.model());
}

// The first K stored examples of a concept.
synthdata::ConceptSet concept_set(const DatasetBundle& b, const ConceptSpec& spec) {
    for (const auto& cs : b.concepts) {
        if (cs.name != spec.name) {
            continue;
        }
        if (cs.examples.size() < spec.K) {
            throw ConfigError("concept '" + spec.name + "' has " + std::to_string(cs.examples.size()) +
                              " stored examples, K = " + std::to_string(spec.K));
        }
        synthdata::ConceptSet out = cs;
        out.examples.resize(spec.K);
        return out;
    }
    throw ConfigError("concept '" + spec.name + "' is missing from the dataset; rerun gen-data");
}

std::size_t worker_count(std::size_t jobs) {
    if (jobs == 0) {
        jobs = std::max(1u, std::thread::hardware_concurrency());
    }
    return jobs;
}

}  // namespace

void gen_data(const RunConfig& c, std::ostream& out) {
    DatasetBundle b;
    b.dataset = synthdata::generate_dataset(c.recipe, c.data_seed);
    for (const auto& spec : c.concepts) {
        b.concepts.push_back(synthdata::generate_concept_set(c.recipe, spec.name, spec.K, c.data_seed));
    }
    const Paths p{c.output_dir};
    write_dataset(p.data_dir(), b, provenance_json(c));
    out << "wrote " << b.dataset.size() << " images, " << b.concepts.size() << " concept sets to "
        << p.data_dir().string() << '\n';
}

void train(const RunConfig& c, std::ostream& out) {
    const auto b = load_bundle(c);
    const auto arch = diffnet::toy_cnn(b.dataset.num_classes(), synthdata::image_shape(c.recipe));
    auto result = diffnet::train(arch, c.train, b.dataset, c.model_seed);
    const Paths p{c.output_dir};
    fs::create_directories(p.root);
    diffnet::save_model(p.model(), result.model);
    reports::write_file(p.train_log(), reports::training_log_csv(result.log, config_hash(c)));
    const auto& meta = result.model.training_meta();
    out << "trained " << meta.epochs << " epochs: train accuracy " << reports::fmt(meta.train_accuracy)
        << ", valid accuracy " << reports::fmt(meta.valid_accuracy) << '\n';
}

void build_cav(const RunConfig& c, std::size_t jobs, std::ostream& out) {
    const auto b = load_bundle(c);
    const auto model = load_trained(c);
    const Paths p{c.output_dir};
    fs::create_directories(p.root / "cavs");
    struct Job {
        const ConceptSpec* spec;
        cav::Method method;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    std::vector<synthdata::ConceptSet> sets;
    for (const auto& spec : c.concepts) {
        sets.push_back(concept_set(b, spec));
        for (auto m : c.methods) {
            for (auto s : c.seeds) {
                work.push_back({&spec, m, s});
            }
        }
    }
    // Errors are collected and the first one (in job order) rethrown.
    std::vector<std::exception_ptr> errors(work.size());
    std::mutex io;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(io);
                if (next >= work.size()) {
                    return;
                }
                i = next++;
            }
            const auto& job = work[i];
            const auto& cs = sets[static_cast<std::size_t>(job.spec - c.concepts.data())];
            try {
                const auto v = cav::build_cav(job.method, model, cs, c.layer, c.hyper_for(*job.spec), job.seed);
                std::lock_guard lock(io);
                cav::save_cav(p.cav_stem(job.spec->name, job.method, job.seed), v);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(worker_count(jobs), work.size()); ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    out << "wrote " << work.size() << " CAVs to " << (p.root / "cavs").string() << '\n';
}

std::vector<tcav::SweepReport> sweep(const RunConfig& c, std::size_t jobs, std::ostream& out) {
    const auto b = load_bundle(c);
    const auto model = load_trained(c);
    const auto test = select_split(b.dataset, Split::test);
    const Paths p{c.output_dir};
    const std::string hash = config_hash(c);
    std::vector<tcav::SweepReport> reports_out;
    for (const auto& spec : c.concepts) {
        const auto cs = concept_set(b, spec);
        for (auto m : c.methods) {
            auto r = tcav::seed_sweep(model, cs, m, c.hyper_for(spec), c.layer, c.seeds, test,
                                      tcav::kDefaultComparatorSign, worker_count(jobs));
            const auto stem = p.sweep_stem(spec.name, m);
            reports::write_file(fs::path(stem).concat(".json"), reports::sweep_json(r, hash));
            reports::write_file(fs::path(stem).concat(".csv"), reports::sweep_csv(r, hash));
            for (const auto& s : r.per_seed) {
                if (!s.recall_percent) {
                    out << "warning: " << spec.name << ' ' << reports::method_label(m) << " seed " << s.seed
                        << " failed: " << s.error << '\n';
                }
            }
            reports_out.push_back(std::move(r));
        }
    }
    reports::write_file(p.summary(), reports::summary_csv(reports_out, hash));
    out << reports::summary_table(reports_out);
    return reports_out;
}

std::vector<tcav::AttackCurve> attack(const RunConfig& c, std::ostream& out) {
    const auto b = load_bundle(c);
    const auto model = load_trained(c);
    const auto test = select_split(b.dataset, Split::test);
    const Paths p{c.output_dir};
    const std::string hash = config_hash(c);
    std::vector<tcav::AttackCurve> all;
    for (const auto& spec : c.concepts) {
        const auto cs = concept_set(b, spec);
        const auto h = c.hyper_for(spec);
        const std::vector<cav::Cav> cavs = {
            cav::build_cav(cav::Method::baseline, model, cs, c.layer, h, c.attack.cav_seed),
            cav::build_cav(cav::Method::adversarial, model, cs, c.layer, h, c.attack.cav_seed),
        };
        const auto curves =
            tcav::attack_distance_curves(model, cavs, test, c.attack.epsilon_step, c.attack.max_steps);
        for (const auto& curve : curves) {
            reports::write_file(p.attack_csv(spec.name, curve.method), reports::attack_csv(curve, hash));
            const auto& last = curve.steps.back();
            out << spec.name << ' ' << reports::method_label(curve.method) << ": final level "
                << reports::fmt(last.level) << " mean distance " << reports::fmt(last.mean_distance)
                << " misclassified " << reports::fmt(last.frac_misclassified) << '\n';
            all.push_back(curve);
        }
    }
    return all;
}

void report(const RunConfig& c, std::ostream& out) {
    const Paths p{c.output_dir};
    std::vector<tcav::SweepReport> rs;
    for (const auto& spec : c.concepts) {
        for (auto m : c.methods) {
            const auto path = fs::path(p.sweep_stem(spec.name, m)).concat(".json");
            if (!fs::exists(path)) {
                throw IoError("sweep report " + path.string() + " not found; run sweep first");
            }
            rs.push_back(reports::parse_sweep_json(reports::read_file(path)));
        }
    }
    reports::write_file(p.summary(), reports::summary_csv(rs, config_hash(c)));
    out << reports::summary_table(rs);
}

int execute(const std::string& command, const std::optional<fs::path>& config_path, const Overrides& overrides,
            std::size_t jobs, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig c = resolve_config(config_path, overrides);
        if (command == "gen-data") {
            gen_data(c, out);
        } else if (command == "train") {
            train(c, out);
        } else if (command == "build-cav") {
            build_cav(c, jobs, out);
        } else if (command == "sweep") {
            sweep(c, jobs, out);
        } else if (command == "attack") {
            attack(c, out);
        } else if (command == "report") {
            report(c, out);
        } else {
            err << "unknown command '" << command << "'\n";
            return kConfigError;
        }
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const synthdata::RecipeError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const diffnet::TrainingError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const cav::CavError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const tcav::EvaluationError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const linalg::DegenerateError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const FormatError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kNumericError;
    }
}

}  // namespace cprobe::commands
