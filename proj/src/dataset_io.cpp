#include <cstdio>
#include <fstream>
#include <sstream>

#include "concept_probe/dataset_io.hpp"
#include "json.hpp"

namespace cprobe {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    for (auto s : {Split::train, Split::valid, Split::test}) {
        if (split_name(s) == name) {
            return s;
        }
    }
    throw FormatError("unknown split '" + std::string(name) + "'");
}

std::vector<std::size_t> LabeledDataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == s) {
            out.push_back(i);
        }
    }
    return out;
}

bool LabeledDataset::is_concept_member(std::string_view concept_name, std::size_t image_index) const {
    const auto it = concept_classes.find(std::string(concept_name));
    if (it == concept_classes.end()) {
        throw std::invalid_argument("unknown concept '" + std::string(concept_name) + "'");
    }
    return it->second.contains(labels.at(image_index));
}

ImageSet select_split(const LabeledDataset& ds, Split s) {
    ImageSet out;
    for (auto i : ds.indices(s)) {
        out.images.push_back(ds.images[i]);
        out.labels.push_back(ds.labels[i]);
        out.ids.push_back(i);
    }
    return out;
}

namespace {

std::string numbered(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.ten", i);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

// Location of a byte offset as "line L, column C".
std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// Typed accessor that reports the offending field path.
template <typename T>
T field(const json& obj, const std::string& key, const std::string& path) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!obj.is_object() || !obj.contains(key)) {
        throw FormatError("manifest: missing field '" + where + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError("manifest: field '" + where + "' has the wrong type (" +
                          std::string(obj.at(key).type_name()) + ")");
    }
}

}  // namespace

void write_dataset(const fs::path& dir, const DatasetBundle& bundle, const std::string& provenance_json) {
    const auto& ds = bundle.dataset;
    json images = json::array();
    for (auto s : {Split::train, Split::valid, Split::test}) {
        ensure_dir(dir / "images" / std::string(split_name(s)));
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const fs::path rel = fs::path("images") / std::string(split_name(ds.splits[i])) / numbered(i);
        save_tensor(dir / rel, ds.images[i]);
        json member = json::array();
        for (const auto& [name, classes] : ds.concept_classes) {
            if (classes.contains(ds.labels[i])) {
                member.push_back(name);
            }
        }
        images.push_back({{"file", rel.generic_string()},
                          {"label", ds.labels[i]},
                          {"split", split_name(ds.splits[i])},
                          {"concepts", member}});
    }
    json concepts = json::array();
    for (const auto& c : bundle.concepts) {
        ensure_dir(dir / "concepts" / c.name);
        json files = json::array();
        for (std::size_t i = 0; i < c.examples.size(); ++i) {
            const fs::path rel = fs::path("concepts") / c.name / numbered(i);
            save_tensor(dir / rel, c.examples[i]);
            files.push_back(rel.generic_string());
        }
        concepts.push_back({{"name", c.name}, {"target_classes", c.target_classes}, {"examples", files}});
    }
    json concept_classes = json::object();
    for (const auto& [name, classes] : ds.concept_classes) {
        concept_classes[name] = classes;
    }
    const json manifest = {
        {"provenance", json::parse(provenance_json)},
        {"class_names", ds.class_names},
        {"concept_classes", concept_classes},
        {"concepts", concepts},
        {"images", images},
    };
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + (dir / "manifest.json").string());
    }
    out << manifest.dump(2) << '\n';
}

DatasetBundle read_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + manifest_path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json m;
    try {
        m = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(manifest_path.string() + ": parse error at " + line_col(text, e.byte) + ": " +
                          e.what());
    }
    const fs::path root = manifest_path.parent_path();
    DatasetBundle bundle;
    auto& ds = bundle.dataset;
    ds.class_names = field<std::vector<std::string>>(m, "class_names", "");
    const auto concept_classes = field<json>(m, "concept_classes", "");
    for (const auto& [name, classes] : concept_classes.items()) {
        ds.concept_classes[name] = field<std::set<std::size_t>>(concept_classes, name, "concept_classes");
    }
    const auto images = field<json>(m, "images", "");
    if (!images.is_array()) {
        throw FormatError("manifest: field 'images' must be an array");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string path = "images[" + std::to_string(i) + "]";
        const auto& e = images[i];
        const auto label = field<std::size_t>(e, "label", path);
        if (label >= ds.class_names.size()) {
            throw FormatError("manifest: field '" + path + ".label' out of range");
        }
        Split split;
        try {
            split = parse_split(field<std::string>(e, "split", path));
        } catch (const FormatError& err) {
            throw FormatError("manifest: field '" + path + ".split': " + err.what());
        }
        ds.images.push_back(load_tensor(root / field<std::string>(e, "file", path)));
        ds.labels.push_back(label);
        ds.splits.push_back(split);
    }
    if (m.contains("concepts")) {
        const auto concepts = field<json>(m, "concepts", "");
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            const std::string path = "concepts[" + std::to_string(i) + "]";
            synthdata::ConceptSet c;
            c.name = field<std::string>(concepts[i], "name", path);
            c.target_classes = field<std::set<std::size_t>>(concepts[i], "target_classes", path);
            for (const auto& f : field<std::vector<std::string>>(concepts[i], "examples", path)) {
                c.examples.push_back(load_tensor(root / f));
            }
            bundle.concepts.push_back(std::move(c));
        }
    }
    return bundle;
}

}  // namespace cprobe
