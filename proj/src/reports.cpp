#include "concept_probe/reports.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "concept_probe/tensor.hpp"

namespace cprobe::reports {

using json = nlohmann::ordered_json;

std::string provenance_line(std::string_view config_hash) {
    return "# concept-probe " + std::string(kToolVersion) + " config_hash=" + std::string(config_hash);
}

std::string_view method_label(cav::Method m) {
    switch (m) {
        case cav::Method::baseline: return "TCAV";
        case cav::Method::adversarial: return "A-TCAV";
        case cav::Method::orthogonal_adversarial: return "OA-TCAV";
    }
    return "?";
}

std::string_view method_tag(cav::Method m) {
    switch (m) {
        case cav::Method::baseline: return "tcav";
        case cav::Method::adversarial: return "a-tcav";
        case cav::Method::orthogonal_adversarial: return "oa-tcav";
    }
    return "?";
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s = buf;
    return s == "-0.000000" ? "0.000000" : s;
}

std::string sweep_csv(const tcav::SweepReport& report, std::string_view config_hash) {
    std::ostringstream os;
    os << provenance_line(config_hash) << '\n' << "seed,method,concept,recall_percent\n";
    for (const auto& s : report.per_seed) {
        // A failed seed keeps its row with an empty recall.
        os << s.seed << ',' << method_tag(report.method) << ',' << report.concept_name << ','
           << (s.recall_percent ? fmt(*s.recall_percent) : "") << '\n';
    }
    return os.str();
}

std::string sweep_json(const tcav::SweepReport& report, std::string_view config_hash) {
    json per_seed = json::array();
    for (const auto& s : report.per_seed) {
        json row = {{"seed", s.seed}};
        row["recall_percent"] = s.recall_percent ? json(*s.recall_percent) : json(nullptr);
        row["train_accuracy"] = s.train_accuracy;
        if (!s.error.empty()) {
            row["error"] = s.error;
        }
        per_seed.push_back(std::move(row));
    }
    const auto& a = report.aggregates;
    const json j = {
        {"tool", "concept-probe"},
        {"version", kToolVersion},
        {"config_hash", config_hash},
        {"method", method_tag(report.method)},
        {"concept", report.concept_name},
        {"hyper",
         {{"epsilon", report.hyper.epsilon},
          {"n_draws", report.hyper.n_draws},
          {"n_gso_instances", report.hyper.n_gso_instances},
          {"K", report.hyper.K},
          {"L", report.hyper.L}}},
        {"per_seed", per_seed},
        {"aggregates", {{"mean", a.mean}, {"std", a.std}, {"min", a.min}, {"max", a.max}, {"n", a.n}}},
        {"std_kind", report.std_kind},
    };
    return j.dump(2) + "\n";
}

tcav::SweepReport parse_sweep_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        tcav::SweepReport r;
        r.method = cav::parse_method(j.at("method").get<std::string>());
        r.concept_name = j.at("concept").get<std::string>();
        const auto& h = j.at("hyper");
        r.hyper.epsilon = h.at("epsilon").get<double>();
        r.hyper.n_draws = h.at("n_draws").get<std::size_t>();
        r.hyper.n_gso_instances = h.at("n_gso_instances").get<std::size_t>();
        r.hyper.K = h.at("K").get<std::size_t>();
        r.hyper.L = h.at("L").get<std::size_t>();
        for (const auto& row : j.at("per_seed")) {
            tcav::SeedRecall s;
            s.seed = row.at("seed").get<std::uint64_t>();
            if (!row.at("recall_percent").is_null()) {
                s.recall_percent = row.at("recall_percent").get<double>();
            }
            s.train_accuracy = row.at("train_accuracy").get<double>();
            s.error = row.value("error", "");
            r.per_seed.push_back(std::move(s));
        }
        const auto& a = j.at("aggregates");
        r.aggregates = {a.at("mean").get<double>(), a.at("std").get<double>(), a.at("min").get<double>(),
                        a.at("max").get<double>(), a.at("n").get<std::size_t>()};
        r.std_kind = j.at("std_kind").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("sweep report: ") + e.what());
    }
}

std::string attack_csv(const tcav::AttackCurve& curve, std::string_view config_hash) {
    std::ostringstream os;
    os << provenance_line(config_hash) << " method=" << method_tag(curve.method) << '\n'
       << "level,mean_distance,frac_misclassified\n";
    char buf[128];
    for (const auto& p : curve.steps) {
        std::snprintf(buf, sizeof buf, "%.6f,%.9e,%.6f\n", p.level, p.mean_distance, p.frac_misclassified);
        os << buf;
    }
    return os.str();
}

std::string training_log_csv(const std::vector<diffnet::EpochStats>& log, std::string_view config_hash) {
    std::ostringstream os;
    os << provenance_line(config_hash) << '\n'
       << "epoch,train_loss,train_accuracy,valid_loss,valid_accuracy,test_loss,test_accuracy\n";
    for (const auto& e : log) {
        os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_accuracy) << ',' << fmt(e.valid_loss)
           << ',' << fmt(e.valid_accuracy) << ',' << fmt(e.test_loss) << ',' << fmt(e.test_accuracy) << '\n';
    }
    return os.str();
}

namespace {

std::string column_name(const tcav::SweepReport& r) {
    return r.concept_name + ":" + std::string(method_label(r.method));
}

double stat(const tcav::Aggregates& a, int row) {
    switch (row) {
        case 0: return a.mean;
        case 1: return a.std;
        case 2: return a.min;
        default: return a.max;
    }
}

constexpr const char* kRows[] = {"mean", "std", "min", "max"};

}  // namespace

std::string summary_csv(const std::vector<tcav::SweepReport>& reports, std::string_view config_hash) {
    std::ostringstream os;
    os << provenance_line(config_hash) << '\n' << "statistic";
    for (const auto& r : reports) {
        os << ',' << column_name(r);
    }
    os << '\n';
    for (int row = 0; row < 4; ++row) {
        os << kRows[row];
        for (const auto& r : reports) {
            os << ',' << fmt(stat(r.aggregates, row));
        }
        os << '\n';
    }
    return os.str();
}

std::string summary_table(const std::vector<tcav::SweepReport>& reports) {
    // Group by concept, one column per method, as in a recall table.
    std::vector<std::string> concepts;
    std::map<std::string, std::vector<const tcav::SweepReport*>> by_concept;
    for (const auto& r : reports) {
        if (!by_concept.contains(r.concept_name)) {
            concepts.push_back(r.concept_name);
        }
        by_concept[r.concept_name].push_back(&r);
    }
    std::ostringstream os;
    char buf[64];
    for (const auto& c : concepts) {
        os << c << '\n';
        std::snprintf(buf, sizeof buf, "  %-6s", "");
        os << buf;
        for (const auto* r : by_concept[c]) {
            std::snprintf(buf, sizeof buf, "%10s", std::string(method_label(r->method)).c_str());
            os << buf;
        }
        os << '\n';
        for (int row = 0; row < 4; ++row) {
            std::snprintf(buf, sizeof buf, "  %-6s", kRows[row]);
            os << buf;
            for (const auto* r : by_concept[c]) {
                std::snprintf(buf, sizeof buf, "%10.2f", stat(r->aggregates, row));
                os << buf;
            }
            os << '\n';
        }
    }
    return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
        }
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace cprobe::reports
